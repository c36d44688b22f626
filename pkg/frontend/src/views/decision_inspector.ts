/**
 * Decision inspector: everything the service reconstructed for one past
 * decision, rendered as fetched. When reconstruction fails the view shows
 * the service's irreproducible verdict and the exact artifacts it named
 * as missing; it never hides the gap behind local state.
 */

import { StackdApiError } from '../api.js';
import { DecisionContext } from '../types.js';
import { escapeHtml } from './incident_queue.js';

function renderExplanation(explanation: Record<string, unknown>): string {
    const kind = typeof explanation.kind === 'string' ? explanation.kind : 'unknown';
    if (kind === 'feature_attribution' && typeof explanation.attribution === 'object') {
        const attribution = explanation.attribution as Record<string, unknown>;
        const rows = Object.keys(attribution)
            .sort()
            .map((feature) => {
                const weight = attribution[feature];
                const shown = typeof weight === 'number' ? weight.toFixed(4) : String(weight);
                return `<tr><td>${escapeHtml(feature)}</td><td class="weight">${escapeHtml(shown)}</td></tr>`;
            })
            .join('');
        return `<table class="attribution"><tbody>${rows}</tbody></table>`;
    }
    if (kind === 'reasoning_trace') {
        const trace = typeof explanation.trace_text === 'string' ? explanation.trace_text : '';
        return `<pre class="trace">${escapeHtml(trace)}</pre>`;
    }
    return `<p class="explanation-kind">${escapeHtml(kind)}</p>`;
}

export function renderDecisionInspector(context: DecisionContext): string {
    const verifications = context.verifications
        .map(
            (v) =>
                `<li class="verification state-${escapeHtml(v.state.toLowerCase())}">` +
                `${escapeHtml(v.control_id)}: ${escapeHtml(v.state)} at ${escapeHtml(v.verified_at)}</li>`,
        )
        .join('');
    const incidents = context.open_incidents
        .map((i) => `<li>${escapeHtml(i.incident_id.slice(0, 12))} (${escapeHtml(i.state)})</li>`)
        .join('');
    return [
        '<section class="decision-inspector">',
        `<h3>decision ${escapeHtml(context.decision.decision_id.slice(0, 12))}</h3>`,
        `<p class="hash">record hash ${escapeHtml(context.record_hash)}</p>`,
        `<p class="bundle">bundle ${escapeHtml(context.decision.bundle_id.slice(0, 12))}, decided ${escapeHtml(context.decision.decided_at)}</p>`,
        `<h4>input</h4><pre class="input">${escapeHtml(context.input_text)}</pre>`,
        '<h4>explanation</h4>',
        renderExplanation(context.explanation),
        '<h4>control verifications in force</h4>',
        verifications ? `<ul>${verifications}</ul>` : '<p class="empty">none recorded</p>',
        '<h4>incidents open at decision time</h4>',
        incidents ? `<ul>${incidents}</ul>` : '<p class="empty">none</p>',
        '</section>',
    ].join('\n');
}

export function renderIrreproducible(decisionId: string, error: StackdApiError): string {
    const missing = Array.isArray(error.details.missing) ? error.details.missing : [];
    const items = missing.map((name) => `<li>${escapeHtml(String(name))}</li>`).join('');
    return [
        '<section class="decision-inspector irreproducible">',
        `<h3>decision ${escapeHtml(decisionId.slice(0, 12))}</h3>`,
        `<p class="banner">${escapeHtml(error.message)}</p>`,
        '<p>missing artifacts:</p>',
        `<ul class="missing">${items}</ul>`,
        '</section>',
    ].join('\n');
}
