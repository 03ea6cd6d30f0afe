// Browser bootstrap: wire DOM events to the controller and re-render
// from state snapshots. Metrics poll every 5 seconds.

import { ServiceClient } from './api.js';
import { ConsoleController, ConsoleState, METRICS_POLL_MS } from './controller.js';
import {
    episodeDetailHtml,
    episodeTableHtml,
    errorBannerHtml,
    rewardCurveSvg,
} from './views.js';
import { Rating } from './types.js';

function el(id: string): HTMLElement {
    const node = document.getElementById(id);
    if (!node) throw new Error(`missing #${id}`);
    return node;
}

function render(state: ConsoleState): void {
    el('error-slot').innerHTML = errorBannerHtml(state.error);
    el('episode-table').innerHTML = episodeTableHtml(
        state.page,
        state.rater,
        state.pending,
    );
    el('episode-detail').innerHTML = state.selected
        ? episodeDetailHtml(state.selected, state.rater)
        : '<p class="empty">Select an episode to inspect it.</p>';
    el('reward-curve').innerHTML = rewardCurveSvg(state.metrics);
}

function start(): void {
    const baseInput = el('base-url') as HTMLInputElement;
    const raterInput = el('rater-name') as HTMLInputElement;
    baseInput.value = localStorage.getItem('console.baseUrl') ?? 'http://127.0.0.1:8080';
    raterInput.value = localStorage.getItem('console.rater') ?? 'rater';

    let controller = makeController();

    function makeController(): ConsoleController {
        const client = new ServiceClient(baseInput.value.replace(/\/$/, ''));
        return new ConsoleController(client, raterInput.value, render);
    }

    function reconnect(): void {
        localStorage.setItem('console.baseUrl', baseInput.value);
        localStorage.setItem('console.rater', raterInput.value);
        controller = makeController();
        void controller.refreshEpisodes();
        void controller.refreshMetrics();
    }

    baseInput.addEventListener('change', reconnect);
    raterInput.addEventListener('change', reconnect);
    el('refresh').addEventListener('click', () => void controller.refreshEpisodes());

    el('episode-table').addEventListener('click', (event) => {
        const target = event.target as HTMLElement;
        const row = target.closest('tr[data-episode]') as HTMLElement | null;
        if (!row) return;
        const episodeId = row.dataset.episode!;
        const rating = target.dataset.rate as Rating | undefined;
        if (rating) {
            void controller.rate(episodeId, rating);
        } else {
            void controller.openEpisode(episodeId);
        }
    });

    void controller.refreshEpisodes();
    void controller.refreshMetrics();
    setInterval(() => void controller.refreshMetrics(), METRICS_POLL_MS);
}

document.addEventListener('DOMContentLoaded', start);
