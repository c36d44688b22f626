/**
 * Drift dashboard: per-dimension scores banded by the service's own
 * level calls, with the warn/breach thresholds the verdict was scored
 * against drawn as reference lines. All numbers are fetched.
 */

import { driftBand } from '../state.js';
import { DriftVerdict } from '../types.js';
import { escapeHtml } from './incident_queue.js';

function bar(score: number, warn: number, breach: number, band: string): string {
    const width = Math.round(Math.min(Math.max(score, 0), 1) * 100);
    const warnAt = Math.round(Math.min(Math.max(warn, 0), 1) * 100);
    const breachAt = Math.round(Math.min(Math.max(breach, 0), 1) * 100);
    return [
        `<div class="bar band-${band}">`,
        `<div class="fill" style="width:${width}%"></div>`,
        `<div class="line warn" style="left:${warnAt}%"></div>`,
        `<div class="line breach" style="left:${breachAt}%"></div>`,
        '</div>',
    ].join('');
}

export function renderDriftDashboard(verdicts: DriftVerdict[]): string {
    if (verdicts.length === 0) {
        return '<section class="drift-dashboard"><p class="empty">no drift verdicts recorded</p></section>';
    }
    const cards = verdicts
        .map((verdict) => {
            const rows = Object.keys(verdict.per_dimension)
                .sort()
                .map((dimension) => {
                    const entry = verdict.per_dimension[dimension];
                    const band = driftBand(verdict, dimension);
                    const pair = verdict.thresholds[dimension] ?? { warn: 0, breach: 0 };
                    return [
                        `<tr class="band-${band}">`,
                        `<td>${escapeHtml(dimension)}</td>`,
                        `<td class="score">${entry.score.toFixed(4)}</td>`,
                        `<td class="level">${escapeHtml(entry.level)}</td>`,
                        `<td>${bar(entry.score, pair.warn, pair.breach, band)}</td>`,
                        '</tr>',
                    ].join('');
                })
                .join('\n');
            return [
                `<article class="verdict overall-${escapeHtml(verdict.overall)}">`,
                `<h3>${escapeHtml(verdict.bundle_id.slice(0, 12))} &mdash; ${escapeHtml(verdict.overall)}</h3>`,
                `<p class="runs">baseline ${escapeHtml(verdict.baseline_run.slice(0, 12))} vs current ${escapeHtml(verdict.current_run.slice(0, 12))}</p>`,
                `<p class="when">${escapeHtml(verdict.evaluated_at)}</p>`,
                '<table><thead><tr><th>dimension</th><th>score</th><th>level</th><th></th></tr></thead>',
                `<tbody>${rows}</tbody></table>`,
                '</article>',
            ].join('\n');
        })
        .join('\n');
    return `<section class="drift-dashboard">${cards}</section>`;
}
