// Contract tests against a stubbed service: the console is a pure
// client of the documented API, so everything here runs in node with a
// fake fetch and no DOM.

import { beforeEach, describe, expect, it } from 'vitest';

import { ServiceClient, ServiceError } from '../src/api.js';
import { ConsoleController } from '../src/controller.js';
import { episodeTableHtml, rewardCurveSvg, escapeHtml } from '../src/views.js';
import { EpisodeDetail, EpisodeSummary, MetricsPoint } from '../src/types.js';

interface RecordedRequest {
    url: string;
    method: string;
    body: unknown;
}

class StubService {
    episodes = new Map<string, EpisodeDetail>();
    metrics: MetricsPoint[] = [];
    requests: RecordedRequest[] = [];
    failNextWith: number | null = null;

    addEpisode(id: string, query = 'what is attribute_50 of entity_0'): void {
        this.episodes.set(id, {
            episode_id: id,
            query,
            task_description: 'QA',
            template_id: 1,
            template_style: 'cot',
            prompt_text: 'Task: QA ...',
            support: [{ doc_id: 'fact-00', text: 'entity_0 attribute_50 is value_100' }],
            response: { text: 'value_100', latency: 0.001, backend: 'simulated' },
            reward: { value: 1, kind: 'correct', source: 'programmatic' },
            ratings: {},
        });
    }

    private summaries(): EpisodeSummary[] {
        return [...this.episodes.values()].map((ep) => ({
            episode_id: ep.episode_id,
            instance_id: 't0',
            query: ep.query,
            answer: ep.response.text,
            template_id: ep.template_id,
            support_size: ep.support.length,
            reward: { value: ep.reward.value, kind: ep.reward.kind },
            ratings: ep.ratings,
        }));
    }

    fetch = async (input: string | URL | Request, init?: RequestInit): Promise<Response> => {
        const url = String(input);
        const method = init?.method ?? 'GET';
        const body = init?.body ? JSON.parse(String(init.body)) : undefined;
        this.requests.push({ url, method, body });

        if (this.failNextWith !== null) {
            const status = this.failNextWith;
            this.failNextWith = null;
            return json(status, {
                error: { code: 'stubbed_failure', message: `stub returned ${status}` },
            });
        }

        const path = url.replace(/^https?:\/\/[^/]+/, '');
        if (method === 'GET' && path.startsWith('/v1/episodes?')) {
            return json(200, { total: this.episodes.size, episodes: this.summaries() });
        }
        if (method === 'GET' && path.startsWith('/v1/episodes/')) {
            const id = decodeURIComponent(path.slice('/v1/episodes/'.length));
            const ep = this.episodes.get(id);
            if (!ep) {
                return json(404, { error: { code: 'unknown_episode', message: `no episode '${id}'` } });
            }
            return json(200, ep);
        }
        if (method === 'GET' && path === '/v1/metrics') {
            return json(200, { series: this.metrics });
        }
        if (method === 'POST' && path === '/v1/feedback') {
            const ep = this.episodes.get(body.episode_id);
            if (!ep) {
                return json(404, { error: { code: 'unknown_episode', message: 'nope' } });
            }
            if (![1, 0, -1].includes(body.rating)) {
                return json(422, { error: { code: 'invalid_rating', message: 'bad enum' } });
            }
            ep.ratings = { ...ep.ratings, [body.rater]: body.rating };
            return json(200, body);
        }
        return json(404, { error: { code: 'not_found', message: path } });
    };

    feedbackPosts(): RecordedRequest[] {
        return this.requests.filter(
            (r) => r.method === 'POST' && r.url.endsWith('/v1/feedback'),
        );
    }
}

function json(status: number, body: unknown): Response {
    return new Response(JSON.stringify(body), {
        status,
        headers: { 'Content-Type': 'application/json' },
    });
}

describe('rating round-trip', () => {
    let stub: StubService;
    let controller: ConsoleController;

    beforeEach(() => {
        stub = new StubService();
        stub.addEpisode('ep-000000');
        const client = new ServiceClient('http://svc.test', stub.fetch);
        controller = new ConsoleController(client, 'ann');
    });

    it('one rating click posts exactly one feedback record with the wire enum', async () => {
        await controller.refreshEpisodes();
        await controller.rate('ep-000000', 'hallucination');

        const posts = stub.feedbackPosts();
        expect(posts).toHaveLength(1);
        expect(posts[0].body).toEqual({
            episode_id: 'ep-000000',
            rating: -1,
            rater: 'ann',
        });
        // the re-fetched episode carries the stored rating
        const row = controller.state().page.episodes[0];
        expect(row.ratings).toEqual({ ann: -1 });
        expect(controller.state().error).toBeNull();
    });

    it('maps every rating label to its service enum value', async () => {
        await controller.refreshEpisodes();
        await controller.rate('ep-000000', 'good');
        await controller.rate('ep-000000', 'unsure');
        const values = stub.feedbackPosts().map((p) => (p.body as { rating: number }).rating);
        expect(values).toEqual([1, 0]);
    });

    it('ignores clicks while a rating for the same episode is in flight', async () => {
        await controller.refreshEpisodes();
        const first = controller.rate('ep-000000', 'good');
        const second = controller.rate('ep-000000', 'hallucination');
        await Promise.all([first, second]);
        expect(stub.feedbackPosts()).toHaveLength(1);
    });

    it('re-fetching after rating shows the rating in the detail view', async () => {
        await controller.openEpisode('ep-000000');
        await controller.rate('ep-000000', 'good');
        expect(controller.state().selected?.ratings).toEqual({ ann: 1 });
    });
});

describe('error surfacing', () => {
    it('a 404 on a deleted episode becomes an inline error and the list survives', async () => {
        const stub = new StubService();
        stub.addEpisode('ep-000000');
        const client = new ServiceClient('http://svc.test', stub.fetch);
        const controller = new ConsoleController(client, 'ann');
        await controller.refreshEpisodes();
        const before = controller.state().page;

        await controller.openEpisode('ep-gone');
        const state = controller.state();
        expect(state.error).toContain('404');
        expect(state.error).toContain('unknown_episode');
        expect(state.page).toEqual(before);
    });

    it('a failed rating keeps the table and reports the error inline', async () => {
        const stub = new StubService();
        stub.addEpisode('ep-000000');
        const client = new ServiceClient('http://svc.test', stub.fetch);
        const controller = new ConsoleController(client, 'ann');
        await controller.refreshEpisodes();
        stub.failNextWith = 503;

        await controller.rate('ep-000000', 'good');
        const state = controller.state();
        expect(state.error).toContain('503');
        expect(state.page.episodes).toHaveLength(1);
        expect(state.pending.size).toBe(0);
    });

    it('client rejects with a typed error carrying the service code', async () => {
        const stub = new StubService();
        const client = new ServiceClient('http://svc.test', stub.fetch);
        await expect(client.getEpisode('missing')).rejects.toBeInstanceOf(ServiceError);
        await expect(client.getEpisode('missing')).rejects.toMatchObject({
            status: 404,
            code: 'unknown_episode',
        });
    });
});

describe('views', () => {
    it('empty metrics chart renders without error', () => {
        const svg = rewardCurveSvg([]);
        expect(svg).toContain('<svg');
        expect(svg).toContain('no training metrics yet');
        expect(svg).toContain('</svg>');
    });

    it('chart renders polylines for a non-empty series', () => {
        const series: MetricsPoint[] = Array.from({ length: 60 }, (_, i) => ({
            episode: i,
            reward: i < 30 ? -0.5 : 1.0,
            loss: 0.1,
            epsilon: 0.5,
            support_size: 1,
            damaging_included: false,
            template_id: 0,
        }));
        const svg = rewardCurveSvg(series);
        expect(svg.match(/<polyline/g)).toHaveLength(2);
        expect(svg).not.toContain('NaN');
    });

    it('episode table escapes untrusted text', () => {
        const page = {
            total: 1,
            episodes: [
                {
                    episode_id: 'ep-1',
                    instance_id: 't',
                    query: '<script>alert(1)</script>',
                    answer: 'a & b',
                    template_id: 0,
                    support_size: 1,
                    reward: null,
                    ratings: {},
                },
            ],
        };
        const html = episodeTableHtml(page, 'ann', new Set());
        expect(html).not.toContain('<script>alert');
        expect(html).toContain('&lt;script&gt;');
        expect(html).toContain('a &amp; b');
    });

    it('empty listing renders an empty state', () => {
        const html = episodeTableHtml({ total: 0, episodes: [] }, 'ann', new Set());
        expect(html).toContain('No episodes yet');
    });

    it('escapeHtml covers the metacharacters', () => {
        expect(escapeHtml('<a href="x">&</a>')).toBe(
            '&lt;a href=&quot;x&quot;&gt;&amp;&lt;/a&gt;',
        );
    });
});
