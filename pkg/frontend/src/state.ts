/**
 * View-enablement rules. These functions decide only whether a control is
 * clickable; every input they look at is a document fetched from the
 * service. Nothing here rescores a gate, a drift verdict, or an incident.
 */

import { DriftVerdict, GateChecks, GateReport, Incident, PromotionRequest } from './types.js';

export function actorProblem(actor: string): string | null {
    if (typeof actor !== 'string' || actor.trim().length === 0) {
        return 'an actor name is required for this action';
    }
    return null;
}

export function canApprove(request: PromotionRequest): boolean {
    return request.state === 'open' || request.state === 'approved_pending';
}

export function canPromote(request: PromotionRequest, report: GateReport | null): boolean {
    if (!canApprove(request)) return false;
    return report !== null && report.all_pass === true;
}

export function canStartInvestigation(incident: Incident): boolean {
    return incident.state === 'Open';
}

export function canResolve(incident: Incident): boolean {
    return incident.state === 'Investigating';
}

export function resolutionNeedsRollbackRef(resolution: string): boolean {
    return resolution === 'Rollback';
}

export function failingChecks(checks: GateChecks): string[] {
    const failing: string[] = [];
    if (!checks.evaluation_pass) failing.push('evaluation_pass');
    if (!checks.evidence_rollup.passed) failing.push('evidence_rollup');
    if (!checks.monitoring_ready) failing.push('monitoring_ready');
    if (!checks.approvals_met.passed) failing.push('approvals_met');
    if (checks.stress_pass === false) failing.push('stress_pass');
    return failing;
}

export function driftBand(verdict: DriftVerdict, dimension: string): 'ok' | 'warn' | 'breach' {
    const entry = verdict.per_dimension[dimension];
    return entry ? entry.level : 'ok';
}

export function newestFirst(incidents: Incident[]): Incident[] {
    return [...incidents].sort((a, b) => (a.incident_id < b.incident_id ? 1 : -1));
}
