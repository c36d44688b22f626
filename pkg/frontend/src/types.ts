/**
 * Wire types for the control-plane API, plus the guard parsers that turn
 * untrusted JSON payloads into them. Every view renders parsed documents
 * only; nothing here recomputes a governance result.
 */

export interface ApiErrorDoc {
    code: string;
    message: string;
    details: Record<string, unknown>;
}

export interface ApprovalEntry {
    approver: string;
    decision: 'approve' | 'reject';
    at: string;
}

export interface PromotionRequest {
    request_id: string;
    bundle_id: string;
    target_env: string;
    state: string;
    created_at: string;
    approvals: ApprovalEntry[];
}

export interface EvidenceRollupCheck {
    state: string;
    vacuous: boolean;
    passed: boolean;
}

export interface ApprovalsCheck {
    passed: boolean;
    required: number;
    approvals: number;
    rejects: number;
}

export interface GateChecks {
    evaluation_pass: boolean;
    evidence_rollup: EvidenceRollupCheck;
    monitoring_ready: boolean;
    approvals_met: ApprovalsCheck;
    stress_pass: boolean | 'n/a';
}

export interface GateReport {
    request_id: string;
    bundle_id: string;
    target_env: string;
    capability_tier: number;
    checks: GateChecks;
    all_pass: boolean;
}

export interface IncidentHistoryEntry {
    event: string;
    at: string;
    actor?: string;
    resolution?: string;
    rollback_ref?: string;
}

export interface Incident {
    incident_id: string;
    bundle_id: string;
    state: string;
    cause: Record<string, unknown>;
    opened_at: string;
    resolution: string | null;
    history: IncidentHistoryEntry[];
}

export interface Deployment {
    deployment_id: string;
    type: 'promotion' | 'rollback';
    bundle_id: string;
    env: string;
    at: string;
    incident_id?: string;
}

export interface DimensionVerdict {
    score: number;
    level: 'ok' | 'warn' | 'breach';
}

export interface ThresholdPair {
    warn: number;
    breach: number;
}

export interface DriftVerdict {
    baseline_run: string;
    current_run: string;
    bundle_id: string;
    per_dimension: Record<string, DimensionVerdict>;
    overall: 'ok' | 'warn' | 'breach';
    thresholds: Record<string, ThresholdPair>;
    evaluated_at: string;
}

export interface VerificationSummary {
    control_id: string;
    state: string;
    verified_at: string;
}

export interface DecisionContext {
    decision: {
        decision_id: string;
        bundle_id: string;
        model_version: string;
        decided_at: string;
    };
    record_hash: string;
    input_text: string;
    explanation: Record<string, unknown>;
    verifications: VerificationSummary[];
    open_incidents: Incident[];
}

export interface DeltaReport {
    l1_distance: number;
    jaccard_top_k: number;
    delta_score: number;
    k: number;
}

function isRecord(value: unknown): value is Record<string, unknown> {
    return typeof value === 'object' && value !== null && !Array.isArray(value);
}

function asString(value: unknown, fallback = ''): string {
    return typeof value === 'string' ? value : fallback;
}

function asNumber(value: unknown, fallback = 0): number {
    return typeof value === 'number' && Number.isFinite(value) ? value : fallback;
}

function asBoolean(value: unknown, fallback = false): boolean {
    return typeof value === 'boolean' ? value : fallback;
}

function asArray(value: unknown): unknown[] {
    return Array.isArray(value) ? value : [];
}

function fail(kind: string): never {
    throw new Error(`malformed ${kind} payload`);
}

export function parseApiError(payload: unknown, status: number): ApiErrorDoc {
    if (!isRecord(payload) || typeof payload.code !== 'string') {
        return { code: 'http-error', message: `request failed with status ${status}`, details: {} };
    }
    return {
        code: payload.code,
        message: asString(payload.message, payload.code),
        details: isRecord(payload.details) ? payload.details : {},
    };
}

export function parsePromotionRequest(payload: unknown): PromotionRequest {
    if (!isRecord(payload)) fail('promotion request');
    return {
        request_id: asString(payload.request_id),
        bundle_id: asString(payload.bundle_id),
        target_env: asString(payload.target_env),
        state: asString(payload.state),
        created_at: asString(payload.created_at),
        approvals: asArray(payload.approvals).map((entry) => {
            if (!isRecord(entry)) fail('approval entry');
            return {
                approver: asString(entry.approver),
                decision: entry.decision === 'reject' ? 'reject' : 'approve',
                at: asString(entry.at),
            };
        }),
    };
}

export function parsePromotionRequests(payload: unknown): PromotionRequest[] {
    return asArray(payload).map(parsePromotionRequest);
}

export function parseGateReport(payload: unknown): GateReport {
    if (!isRecord(payload) || !isRecord(payload.checks)) fail('gate report');
    const checks = payload.checks;
    const rollup = isRecord(checks.evidence_rollup) ? checks.evidence_rollup : fail('gate report');
    const approvals = isRecord(checks.approvals_met) ? checks.approvals_met : fail('gate report');
    return {
        request_id: asString(payload.request_id),
        bundle_id: asString(payload.bundle_id),
        target_env: asString(payload.target_env),
        capability_tier: asNumber(payload.capability_tier),
        checks: {
            evaluation_pass: asBoolean(checks.evaluation_pass),
            evidence_rollup: {
                state: asString(rollup.state),
                vacuous: asBoolean(rollup.vacuous),
                passed: asBoolean(rollup.passed),
            },
            monitoring_ready: asBoolean(checks.monitoring_ready),
            approvals_met: {
                passed: asBoolean(approvals.passed),
                required: asNumber(approvals.required),
                approvals: asNumber(approvals.approvals),
                rejects: asNumber(approvals.rejects),
            },
            stress_pass: checks.stress_pass === 'n/a' ? 'n/a' : asBoolean(checks.stress_pass),
        },
        all_pass: asBoolean(payload.all_pass),
    };
}

export function parseIncident(payload: unknown): Incident {
    if (!isRecord(payload)) fail('incident');
    return {
        incident_id: asString(payload.incident_id),
        bundle_id: asString(payload.bundle_id),
        state: asString(payload.state),
        cause: isRecord(payload.cause) ? payload.cause : {},
        opened_at: asString(payload.opened_at),
        resolution: typeof payload.resolution === 'string' ? payload.resolution : null,
        history: asArray(payload.history).map((entry) => {
            if (!isRecord(entry)) fail('incident history');
            return {
                event: asString(entry.event),
                at: asString(entry.at),
                actor: typeof entry.actor === 'string' ? entry.actor : undefined,
                resolution: typeof entry.resolution === 'string' ? entry.resolution : undefined,
                rollback_ref: typeof entry.rollback_ref === 'string' ? entry.rollback_ref : undefined,
            };
        }),
    };
}

export function parseIncidents(payload: unknown): Incident[] {
    return asArray(payload).map(parseIncident);
}

export function parseDeployment(payload: unknown): Deployment {
    if (!isRecord(payload)) fail('deployment');
    return {
        deployment_id: asString(payload.deployment_id),
        type: payload.type === 'rollback' ? 'rollback' : 'promotion',
        bundle_id: asString(payload.bundle_id),
        env: asString(payload.env),
        at: asString(payload.at),
        incident_id: typeof payload.incident_id === 'string' ? payload.incident_id : undefined,
    };
}

export function parseDeployments(payload: unknown): Deployment[] {
    return asArray(payload).map(parseDeployment);
}

export function parseDriftVerdict(payload: unknown): DriftVerdict {
    if (!isRecord(payload) || !isRecord(payload.per_dimension)) fail('drift verdict');
    const dims: Record<string, DimensionVerdict> = {};
    for (const [name, entry] of Object.entries(payload.per_dimension)) {
        if (!isRecord(entry)) fail('drift verdict');
        const level = entry.level;
        dims[name] = {
            score: asNumber(entry.score),
            level: level === 'warn' || level === 'breach' ? level : 'ok',
        };
    }
    const thresholds: Record<string, ThresholdPair> = {};
    if (isRecord(payload.thresholds)) {
        for (const [name, pair] of Object.entries(payload.thresholds)) {
            if (!isRecord(pair)) continue;
            thresholds[name] = { warn: asNumber(pair.warn), breach: asNumber(pair.breach) };
        }
    }
    const overall = payload.overall;
    return {
        baseline_run: asString(payload.baseline_run),
        current_run: asString(payload.current_run),
        bundle_id: asString(payload.bundle_id),
        per_dimension: dims,
        overall: overall === 'warn' || overall === 'breach' ? overall : 'ok',
        thresholds,
        evaluated_at: asString(payload.evaluated_at),
    };
}

export function parseDriftVerdicts(payload: unknown): DriftVerdict[] {
    return asArray(payload).map(parseDriftVerdict);
}

export function parseDecisionContext(payload: unknown): DecisionContext {
    if (!isRecord(payload) || !isRecord(payload.decision)) fail('decision context');
    const decision = payload.decision;
    return {
        decision: {
            decision_id: asString(decision.decision_id),
            bundle_id: asString(decision.bundle_id),
            model_version: asString(decision.model_version),
            decided_at: asString(decision.decided_at),
        },
        record_hash: asString(payload.record_hash),
        input_text: asString(payload.input_text),
        explanation: isRecord(payload.explanation) ? payload.explanation : {},
        verifications: asArray(payload.verifications).map((entry) => {
            if (!isRecord(entry)) fail('verification');
            return {
                control_id: asString(entry.control_id),
                state: asString(entry.state),
                verified_at: asString(entry.verified_at),
            };
        }),
        open_incidents: parseIncidents(payload.open_incidents),
    };
}

export function parseDeltaReport(payload: unknown): DeltaReport {
    if (!isRecord(payload)) fail('delta report');
    return {
        l1_distance: asNumber(payload.l1_distance),
        jaccard_top_k: asNumber(payload.jaccard_top_k),
        delta_score: asNumber(payload.delta_score),
        k: asNumber(payload.k),
    };
}
