/**
 * Approvals board: open promotion requests with their fetched gate
 * reports. The promote button is enabled only when the service's own
 * gate report says all_pass; the console never re-evaluates a gate.
 */

import { canApprove, canPromote, failingChecks } from '../state.js';
import { GateReport, PromotionRequest } from '../types.js';
import { escapeHtml } from './incident_queue.js';

function checkList(report: GateReport): string {
    const failing = new Set(failingChecks(report.checks));
    const entries: Array<[string, string]> = [
        ['evaluation_pass', String(report.checks.evaluation_pass)],
        [
            'evidence_rollup',
            `${report.checks.evidence_rollup.state}${report.checks.evidence_rollup.vacuous ? ' (vacuous)' : ''}`,
        ],
        ['monitoring_ready', String(report.checks.monitoring_ready)],
        [
            'approvals_met',
            `${report.checks.approvals_met.approvals}/${report.checks.approvals_met.required} approvals, ${report.checks.approvals_met.rejects} rejects`,
        ],
        ['stress_pass', String(report.checks.stress_pass)],
    ];
    const items = entries
        .map(([name, value]) => {
            const cls = failing.has(name) ? 'check failing' : 'check';
            return `<li class="${cls}"><span class="name">${escapeHtml(name)}</span> <span class="value">${escapeHtml(value)}</span></li>`;
        })
        .join('');
    return `<ul class="checks">${items}</ul>`;
}

export function renderApprovals(
    requests: PromotionRequest[],
    reports: Map<string, GateReport>,
): string {
    if (requests.length === 0) {
        return '<section class="approvals"><p class="empty">no open promotion requests</p></section>';
    }
    const cards = requests
        .map((request) => {
            const report = reports.get(request.request_id) ?? null;
            const approvals = request.approvals
                .map((a) => `${escapeHtml(a.approver)}:${escapeHtml(a.decision)}`)
                .join(', ');
            const approveAttrs = canApprove(request) ? '' : ' disabled';
            const promoteAttrs = canPromote(request, report) ? '' : ' disabled';
            return [
                `<article class="request" data-request="${escapeHtml(request.request_id)}">`,
                `<h3>${escapeHtml(request.bundle_id.slice(0, 12))} &rarr; ${escapeHtml(request.target_env)}</h3>`,
                `<p class="state">${escapeHtml(request.state)}</p>`,
                `<p class="approvals-given">${approvals || 'no approvals yet'}</p>`,
                report ? checkList(report) : '<p class="loading">gate report pending</p>',
                `<label>approver <input name="approver" data-request="${escapeHtml(request.request_id)}"></label>`,
                `<button data-action="approve" data-request="${escapeHtml(request.request_id)}"${approveAttrs}>approve</button>`,
                `<button data-action="promote" data-request="${escapeHtml(request.request_id)}"${promoteAttrs}>promote</button>`,
                '</article>',
            ].join('\n');
        })
        .join('\n');
    return `<section class="approvals">${cards}</section>`;
}
