/**
 * HTTP client for the control-plane service. The console talks to the
 * service exclusively through this module; every governance result it
 * displays is fetched, never recomputed locally.
 */

import {
    DecisionContext,
    DeltaReport,
    Deployment,
    DriftVerdict,
    GateReport,
    Incident,
    PromotionRequest,
    parseApiError,
    parseDecisionContext,
    parseDeltaReport,
    parseDeployments,
    parseDriftVerdicts,
    parseGateReport,
    parseIncident,
    parseIncidents,
    parsePromotionRequest,
    parsePromotionRequests,
} from './types.js';

export class StackdApiError extends Error {
    readonly code: string;
    readonly details: Record<string, unknown>;
    readonly status: number;

    constructor(code: string, message: string, details: Record<string, unknown>, status: number) {
        super(message);
        this.name = 'StackdApiError';
        this.code = code;
        this.details = details;
        this.status = status;
    }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class StackdClient {
    private readonly baseUrl: string;
    private readonly fetchImpl: FetchLike;

    constructor(baseUrl: string, fetchImpl: FetchLike = fetch) {
        this.baseUrl = baseUrl.replace(/\/+$/, '');
        this.fetchImpl = fetchImpl;
    }

    private async request(method: string, path: string, body?: unknown): Promise<unknown> {
        const init: RequestInit = { method };
        if (body !== undefined) {
            if (body instanceof Uint8Array) {
                init.body = body as Uint8Array<ArrayBuffer>;
                init.headers = { 'content-type': 'application/octet-stream' };
            } else {
                init.body = JSON.stringify(body);
                init.headers = { 'content-type': 'application/json' };
            }
        }
        let response: Response;
        try {
            response = await this.fetchImpl(`${this.baseUrl}${path}`, init);
        } catch (err) {
            const reason = err instanceof Error ? err.message : String(err);
            throw new StackdApiError('connection-failed', reason, {}, 0);
        }
        const text = await response.text();
        let payload: unknown = null;
        if (text.length > 0) {
            try {
                payload = JSON.parse(text);
            } catch {
                payload = null;
            }
        }
        if (!response.ok) {
            const doc = parseApiError(payload, response.status);
            throw new StackdApiError(doc.code, doc.message, doc.details, response.status);
        }
        return payload;
    }

    // -- platform ---------------------------------------------------------

    healthz(): Promise<unknown> {
        return this.request('GET', '/healthz');
    }

    putBlob(data: Uint8Array): Promise<unknown> {
        return this.request('POST', '/blobs', data);
    }

    createBundle(manifest: Record<string, unknown>): Promise<unknown> {
        return this.request('POST', '/bundles', manifest);
    }

    registerControl(spec: Record<string, unknown>): Promise<unknown> {
        return this.request('POST', '/controls', spec);
    }

    attachEvidence(controlId: string, evidence: Record<string, unknown>): Promise<unknown> {
        return this.request('POST', `/controls/${controlId}/evidence`, evidence);
    }

    verifyControl(controlId: string, bundle?: string): Promise<unknown> {
        return this.request('POST', `/controls/${controlId}/verify`, bundle ? { bundle } : {});
    }

    createGoldenSet(spec: Record<string, unknown>): Promise<unknown> {
        return this.request('POST', '/golden-sets', spec);
    }

    runStress(
        bundle: string,
        setId: string,
        adapter: Record<string, unknown>,
        seed: number,
    ): Promise<unknown> {
        return this.request('POST', '/stress-runs', {
            bundle,
            set_id: setId,
            adapter,
            seed,
        });
    }

    evaluateDrift(baselineRun: string, currentRun: string): Promise<unknown> {
        return this.request('POST', '/drift/evaluate', {
            baseline_run: baselineRun,
            current_run: currentRun,
        });
    }

    appendDecision(record: Record<string, unknown>): Promise<unknown> {
        return this.request('POST', '/decisions', record);
    }

    // -- promotions and deployments ----------------------------------------

    async requestPromotion(bundle: string, targetEnv: string): Promise<PromotionRequest> {
        const doc = await this.request('POST', '/promotions', {
            bundle,
            target_env: targetEnv,
        });
        return parsePromotionRequest(doc);
    }

    async listPromotions(state?: string): Promise<PromotionRequest[]> {
        const query = state ? `?state=${encodeURIComponent(state)}` : '';
        return parsePromotionRequests(await this.request('GET', `/promotions${query}`));
    }

    async getGateReport(requestId: string): Promise<GateReport> {
        return parseGateReport(await this.request('GET', `/promotions/${requestId}/gates`));
    }

    async recordApproval(
        requestId: string,
        approver: string,
        decision: 'approve' | 'reject',
    ): Promise<PromotionRequest> {
        const doc = await this.request('POST', `/promotions/${requestId}/approvals`, {
            approver,
            decision,
        });
        return parsePromotionRequest(doc);
    }

    promote(requestId: string): Promise<unknown> {
        return this.request('POST', `/promotions/${requestId}/promote`);
    }

    async rollback(env: string, bundle: string, incidentId: string): Promise<Deployment> {
        const doc = await this.request('POST', '/rollbacks', {
            env,
            bundle,
            incident_id: incidentId,
        });
        return parseDeployments([doc])[0];
    }

    async listDeployments(env?: string): Promise<Deployment[]> {
        const query = env ? `?env=${encodeURIComponent(env)}` : '';
        return parseDeployments(await this.request('GET', `/deployments${query}`));
    }

    // -- incidents -----------------------------------------------------------

    async listIncidents(state?: string): Promise<Incident[]> {
        const query = state ? `?state=${encodeURIComponent(state)}` : '';
        return parseIncidents(await this.request('GET', `/incidents${query}`));
    }

    async getIncident(incidentId: string): Promise<Incident> {
        return parseIncident(await this.request('GET', `/incidents/${incidentId}`));
    }

    async transitionIncident(
        incidentId: string,
        event: string,
        options: { actor?: string; resolution?: string; rollback_ref?: string } = {},
    ): Promise<Incident> {
        const body: Record<string, unknown> = { event };
        if (options.actor !== undefined) body.actor = options.actor;
        if (options.resolution !== undefined) body.resolution = options.resolution;
        if (options.rollback_ref !== undefined) body.rollback_ref = options.rollback_ref;
        const doc = await this.request('POST', `/incidents/${incidentId}/transition`, body);
        return parseIncident(doc);
    }

    // -- inspection ------------------------------------------------------------

    async driftVerdicts(bundleId?: string): Promise<DriftVerdict[]> {
        const query = bundleId ? `?bundle_id=${encodeURIComponent(bundleId)}` : '';
        return parseDriftVerdicts(await this.request('GET', `/drift/verdicts${query}`));
    }

    async decisionContext(decisionId: string): Promise<DecisionContext> {
        return parseDecisionContext(await this.request('GET', `/decisions/${decisionId}/context`));
    }

    async explanationDelta(
        a: Record<string, unknown>,
        b: Record<string, unknown>,
        k = 5,
    ): Promise<DeltaReport> {
        return parseDeltaReport(await this.request('POST', '/explanations/delta', { a, b, k }));
    }
}
