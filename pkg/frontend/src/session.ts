/**
 * Multi-step console workflows. Each flow validates its inputs up front,
 * fetches the service's own judgement of the current state, and only then
 * issues mutations. A flow never substitutes a local guess for a fetched
 * gate report or incident state.
 */

import { StackdClient } from './api.js';
import { actorProblem, canPromote } from './state.js';
import { Deployment, GateReport, Incident } from './types.js';

export interface PromoteOutcome {
    promoted: boolean;
    report: GateReport;
    deployment?: unknown;
}

export async function approveAndPromote(
    client: StackdClient,
    requestId: string,
    approver: string,
): Promise<PromoteOutcome> {
    const problem = actorProblem(approver);
    if (problem) {
        throw new Error(problem);
    }
    const request = await client.recordApproval(requestId, approver, 'approve');
    const report = await client.getGateReport(requestId);
    if (!canPromote(request, report)) {
        return { promoted: false, report };
    }
    const deployment = await client.promote(requestId);
    return { promoted: true, report, deployment };
}

export interface RollbackOutcome {
    incident: Incident;
    rollback: Deployment;
}

export async function investigateAndRollback(
    client: StackdClient,
    incidentId: string,
    env: string,
    targetBundleId: string,
    actor: string,
): Promise<RollbackOutcome> {
    const problem = actorProblem(actor);
    if (problem) {
        throw new Error(problem);
    }
    let incident = await client.getIncident(incidentId);
    if (incident.state === 'Open') {
        incident = await client.transitionIncident(incidentId, 'start_investigation', { actor });
    }
    if (incident.state !== 'Investigating') {
        throw new Error(`incident is ${incident.state}, cannot resolve`);
    }
    const deployments = await client.listDeployments(env);
    const candidates = deployments.filter(
        (d) => d.type === 'promotion' && d.bundle_id === targetBundleId,
    );
    if (candidates.length === 0) {
        throw new Error(`bundle ${targetBundleId} has no recorded ${env} deployment to return to`);
    }
    const rollback = await client.rollback(env, targetBundleId, incidentId);
    incident = await client.transitionIncident(incidentId, 'resolve', {
        actor,
        resolution: 'Rollback',
        rollback_ref: rollback.deployment_id,
    });
    return { incident, rollback };
}

export async function resolveSimple(
    client: StackdClient,
    incidentId: string,
    resolution: 'Retrain' | 'Accept',
    actor: string,
): Promise<Incident> {
    const problem = actorProblem(actor);
    if (problem) {
        throw new Error(problem);
    }
    return client.transitionIncident(incidentId, 'resolve', { actor, resolution });
}
