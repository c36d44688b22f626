/**
 * Console entry point: navigation, polling, and action wiring. Every
 * state shown is re-fetched on a short interval; mutations go through
 * the session flows which re-check the service before acting.
 */

import { StackdApiError, StackdClient } from './api.js';
import { approveAndPromote, investigateAndRollback, resolveSimple } from './session.js';
import { actorProblem, canResolve } from './state.js';
import { GateReport } from './types.js';
import { renderApprovals } from './views/approvals.js';
import { renderDecisionInspector, renderIrreproducible } from './views/decision_inspector.js';
import { renderDriftDashboard } from './views/drift_dashboard.js';
import { escapeHtml, renderIncidentQueue } from './views/incident_queue.js';

const POLL_MS = 4000;
const VIEWS = ['incidents', 'approvals', 'drift', 'decisions'] as const;
type ViewName = (typeof VIEWS)[number];

function toast(message: string): void {
    const el = document.getElementById('toast');
    if (!el) return;
    el.textContent = message;
    el.classList.add('visible');
    setTimeout(() => el.classList.remove('visible'), 6000);
}

function describeError(err: unknown): string {
    if (err instanceof StackdApiError) {
        return `${err.code}: ${err.message}`;
    }
    return err instanceof Error ? err.message : String(err);
}

export class Console {
    private readonly client: StackdClient;
    private view: ViewName = 'incidents';
    private decisionId = '';

    constructor(client: StackdClient) {
        this.client = client;
    }

    start(): void {
        const nav = document.getElementById('nav');
        if (nav) {
            nav.innerHTML = VIEWS.map(
                (name) => `<button data-view="${name}">${name}</button>`,
            ).join('');
            nav.addEventListener('click', (event) => {
                const target = event.target as HTMLElement;
                const view = target.dataset.view as ViewName | undefined;
                if (view) {
                    this.view = view;
                    void this.refresh();
                }
            });
        }
        const content = document.getElementById('content');
        if (content) {
            content.addEventListener('click', (event) => void this.onAction(event));
        }
        void this.refresh();
        setInterval(() => void this.refresh(), POLL_MS);
    }

    private async refresh(): Promise<void> {
        const content = document.getElementById('content');
        if (!content) return;
        try {
            content.innerHTML = await this.renderView();
        } catch (err) {
            toast(describeError(err));
        }
    }

    private async renderView(): Promise<string> {
        if (this.view === 'incidents') {
            return renderIncidentQueue(await this.client.listIncidents());
        }
        if (this.view === 'approvals') {
            const requests = await this.client.listPromotions();
            const open = requests.filter((r) => r.state === 'open' || r.state === 'approved_pending');
            const reports = new Map<string, GateReport>();
            for (const request of open) {
                reports.set(request.request_id, await this.client.getGateReport(request.request_id));
            }
            return renderApprovals(open, reports);
        }
        if (this.view === 'drift') {
            return renderDriftDashboard(await this.client.driftVerdicts());
        }
        if (!this.decisionId) {
            return [
                '<section class="decision-inspector">',
                '<label>decision id <input id="decision-id"></label>',
                '<button data-action="inspect">inspect</button>',
                '</section>',
            ].join('\n');
        }
        try {
            return renderDecisionInspector(await this.client.decisionContext(this.decisionId));
        } catch (err) {
            if (err instanceof StackdApiError && err.code === 'irreproducible') {
                return renderIrreproducible(this.decisionId, err);
            }
            throw err;
        }
    }

    private async onAction(event: Event): Promise<void> {
        const target = event.target as HTMLElement;
        const action = target.dataset.action;
        if (!action) return;
        try {
            if (action === 'inspect') {
                const input = document.getElementById('decision-id') as HTMLInputElement | null;
                this.decisionId = input ? input.value.trim() : '';
            } else if (action === 'approve' || action === 'promote') {
                const requestId = target.dataset.request ?? '';
                const field = document.querySelector(
                    `input[name="approver"][data-request="${requestId}"]`,
                ) as HTMLInputElement | null;
                const approver = field ? field.value.trim() : '';
                if (action === 'approve') {
                    const problem = actorProblem(approver);
                    if (problem) {
                        toast(problem);
                        return;
                    }
                    const outcome = await approveAndPromote(this.client, requestId, approver);
                    toast(outcome.promoted ? 'promoted' : 'approval recorded, gates not yet green');
                } else {
                    await this.client.promote(requestId);
                    toast('promoted');
                }
            } else if (action === 'investigate' || action === 'resolve') {
                await this.onIncidentAction(action, target.dataset.incident ?? '');
            }
        } catch (err) {
            toast(describeError(err));
        }
        void this.refresh();
    }

    private async onIncidentAction(action: string, incidentId: string): Promise<void> {
        const actor = window.prompt('actor name:')?.trim() ?? '';
        const problem = actorProblem(actor);
        if (problem) {
            toast(problem);
            return;
        }
        if (action === 'investigate') {
            await this.client.transitionIncident(incidentId, 'start_investigation', { actor });
            return;
        }
        const incident = await this.client.getIncident(incidentId);
        if (!canResolve(incident)) {
            toast(`incident is ${incident.state}, cannot resolve`);
            return;
        }
        const resolution = window.prompt('resolution (Rollback, Retrain, Accept):')?.trim() ?? '';
        if (resolution === 'Rollback') {
            const env = window.prompt('environment to roll back:')?.trim() ?? '';
            const deployments = await this.client.listDeployments(env);
            const promoted = deployments.filter((d) => d.type === 'promotion');
            if (promoted.length === 0) {
                toast(`no prior ${env} deployments to return to`);
                return;
            }
            const menu = promoted
                .map((d, i) => `${i}: ${d.bundle_id.slice(0, 12)} at ${d.at}`)
                .join('\n');
            const pick = window.prompt(`pick a deployment to return to:\n${escapeHtml(menu)}`) ?? '';
            const index = Number.parseInt(pick, 10);
            if (!Number.isInteger(index) || index < 0 || index >= promoted.length) {
                toast('no deployment selected');
                return;
            }
            await investigateAndRollback(
                this.client,
                incidentId,
                env,
                promoted[index].bundle_id,
                actor,
            );
            toast('rolled back and resolved');
        } else if (resolution === 'Retrain' || resolution === 'Accept') {
            await resolveSimple(this.client, incidentId, resolution, actor);
            toast(`resolved (${resolution})`);
        } else {
            toast('resolution must be Rollback, Retrain, or Accept');
        }
    }
}

export function boot(): void {
    const params = new URLSearchParams(window.location.search);
    const base = params.get('api') ?? 'http://127.0.0.1:7317';
    new Console(new StackdClient(base)).start();
}

if (typeof document !== 'undefined' && document.getElementById('content')) {
    boot();
}
