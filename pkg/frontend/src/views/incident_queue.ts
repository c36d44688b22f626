/**
 * Incident queue: newest first, with the actions each state allows.
 * States and causes come straight from fetched incident documents.
 */

import { canResolve, canStartInvestigation, newestFirst } from '../state.js';
import { Incident } from '../types.js';

export function escapeHtml(text: string): string {
    return text
        .replace(/&/g, '&amp;')
        .replace(/</g, '&lt;')
        .replace(/>/g, '&gt;')
        .replace(/"/g, '&quot;');
}

function causeSummary(incident: Incident): string {
    const kind = typeof incident.cause.type === 'string' ? incident.cause.type : 'unknown';
    if (kind === 'drift_verdict') {
        const overall = typeof incident.cause.overall === 'string' ? incident.cause.overall : '';
        return `drift ${overall}`.trim();
    }
    if (kind === 'telemetry_alert') {
        const signal = typeof incident.cause.signal === 'string' ? incident.cause.signal : '';
        const severity = typeof incident.cause.severity === 'string' ? incident.cause.severity : '';
        return `telemetry ${signal} ${severity}`.trim();
    }
    if (kind === 'stress_failure') {
        return 'adversarial stress failure';
    }
    return kind;
}

function actionButtons(incident: Incident): string {
    const parts: string[] = [];
    if (canStartInvestigation(incident)) {
        parts.push(
            `<button data-action="investigate" data-incident="${escapeHtml(incident.incident_id)}">investigate</button>`,
        );
    }
    if (canResolve(incident)) {
        parts.push(
            `<button data-action="resolve" data-incident="${escapeHtml(incident.incident_id)}">resolve</button>`,
        );
    }
    return parts.join(' ');
}

export function renderIncidentQueue(incidents: Incident[]): string {
    if (incidents.length === 0) {
        return '<section class="incident-queue"><p class="empty">no incidents</p></section>';
    }
    const rows = newestFirst(incidents)
        .map((incident) => {
            const resolution = incident.resolution ? ` (${escapeHtml(incident.resolution)})` : '';
            return [
                `<tr class="state-${escapeHtml(incident.state.toLowerCase())}">`,
                `<td class="id">${escapeHtml(incident.incident_id.slice(0, 12))}</td>`,
                `<td>${escapeHtml(incident.bundle_id.slice(0, 12))}</td>`,
                `<td>${escapeHtml(causeSummary(incident))}</td>`,
                `<td>${escapeHtml(incident.state)}${resolution}</td>`,
                `<td>${escapeHtml(incident.opened_at)}</td>`,
                `<td>${actionButtons(incident)}</td>`,
                '</tr>',
            ].join('');
        })
        .join('\n');
    return [
        '<section class="incident-queue">',
        '<table>',
        '<thead><tr><th>incident</th><th>bundle</th><th>cause</th><th>state</th><th>opened</th><th>actions</th></tr></thead>',
        `<tbody>${rows}</tbody>`,
        '</table>',
        '</section>',
    ].join('\n');
}
