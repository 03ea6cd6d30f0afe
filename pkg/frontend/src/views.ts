// Pure render functions: state in, HTML/SVG strings out. Keeping these
// free of fetch and DOM access is what makes the console testable in
// node against a stubbed service.

import { EpisodeDetail, EpisodesPage, MetricsPoint, Rating } from './types.js';

export function escapeHtml(text: string): string {
    return text
        .replace(/&/g, '&amp;')
        .replace(/</g, '&lt;')
        .replace(/>/g, '&gt;')
        .replace(/"/g, '&quot;');
}

function ratingBadge(ratings: Record<string, number>, rater: string): string {
    if (!(rater in ratings)) return '<span class="badge unrated">unrated</span>';
    const value = ratings[rater];
    const label = value === 1 ? 'good' : value === 0 ? 'unsure' : 'hallucination';
    return `<span class="badge rating-${label}">${label}</span>`;
}

export function episodeTableHtml(
    page: EpisodesPage,
    rater: string,
    pending: ReadonlySet<string>,
): string {
    if (page.total === 0) {
        return '<p class="empty">No episodes yet. Send a query to the service first.</p>';
    }
    const rows = page.episodes
        .map((ep) => {
            const busy = pending.has(ep.episode_id) ? ' disabled' : '';
            return `<tr data-episode="${escapeHtml(ep.episode_id)}">
  <td class="mono">${escapeHtml(ep.episode_id)}</td>
  <td>${escapeHtml(ep.query)}</td>
  <td>${escapeHtml(ep.answer ?? '')}</td>
  <td class="num">${ep.support_size}</td>
  <td>${ratingBadge(ep.ratings, rater)}</td>
  <td class="actions">
    <button data-rate="good"${busy}>good</button>
    <button data-rate="unsure"${busy}>unsure</button>
    <button data-rate="hallucination"${busy}>hallucination</button>
  </td>
</tr>`;
        })
        .join('\n');
    return `<table class="episodes">
<thead><tr><th>episode</th><th>query</th><th>answer</th><th>docs</th><th>your rating</th><th></th></tr></thead>
<tbody>
${rows}
</tbody>
</table>
<p class="count">${page.episodes.length} of ${page.total} episodes</p>`;
}

export function episodeDetailHtml(detail: EpisodeDetail, rater: string): string {
    const docs = detail.support
        .map(
            (doc) =>
                `<li><span class="mono">${escapeHtml(doc.doc_id)}</span> ${escapeHtml(doc.text)}</li>`,
        )
        .join('\n');
    return `<section class="detail">
<h2 class="mono">${escapeHtml(detail.episode_id)}</h2>
<dl>
  <dt>query</dt><dd>${escapeHtml(detail.query)}</dd>
  <dt>answer</dt><dd>${escapeHtml(detail.response.text)}</dd>
  <dt>template</dt><dd>${escapeHtml(detail.template_style)} (#${detail.template_id})</dd>
  <dt>reward</dt><dd>${detail.reward.value} (${escapeHtml(detail.reward.kind)}, ${escapeHtml(detail.reward.source)})</dd>
  <dt>your rating</dt><dd>${ratingBadge(detail.ratings, rater)}</dd>
</dl>
<h3>support set</h3>
<ol>${docs}</ol>
<details><summary>full prompt</summary><pre>${escapeHtml(detail.prompt_text)}</pre></details>
</section>`;
}

const CURVE_W = 640;
const CURVE_H = 200;
const PAD = 28;

export function rewardCurveSvg(series: MetricsPoint[], windowSize = 25): string {
    const header =
        `<svg viewBox="0 0 ${CURVE_W} ${CURVE_H}" xmlns="http://www.w3.org/2000/svg" ` +
        `role="img" aria-label="training reward curve">`;
    if (series.length === 0) {
        return (
            `${header}<text x="${CURVE_W / 2}" y="${CURVE_H / 2}" ` +
            `text-anchor="middle" class="empty">no training metrics yet</text></svg>`
        );
    }
    const xMax = Math.max(series[series.length - 1].episode, 1);
    const x = (episode: number) => PAD + (episode / xMax) * (CURVE_W - 2 * PAD);
    const y = (reward: number) => CURVE_H - PAD - ((reward + 1) / 2) * (CURVE_H - 2 * PAD);

    const raw = series
        .map((p) => `${x(p.episode).toFixed(1)},${y(p.reward).toFixed(1)}`)
        .join(' ');

    const smooth: string[] = [];
    let acc = 0;
    for (let i = 0; i < series.length; i++) {
        acc += series[i].reward;
        if (i >= windowSize) acc -= series[i - windowSize].reward;
        const mean = acc / Math.min(i + 1, windowSize);
        smooth.push(`${x(series[i].episode).toFixed(1)},${y(mean).toFixed(1)}`);
    }

    const zero = y(0).toFixed(1);
    return `${header}
<line x1="${PAD}" y1="${zero}" x2="${CURVE_W - PAD}" y2="${zero}" class="axis"/>
<polyline points="${raw}" fill="none" class="reward-raw"/>
<polyline points="${smooth.join(' ')}" fill="none" class="reward-smooth"/>
<text x="${PAD}" y="14" class="label">reward per episode (smoothed over ${windowSize})</text>
</svg>`;
}

export function errorBannerHtml(message: string | null): string {
    if (!message) return '';
    return `<div class="error-banner" role="alert">${escapeHtml(message)}</div>`;
}
