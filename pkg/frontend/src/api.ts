// Thin typed client over the service HTTP API.

import {
    EpisodeDetail,
    EpisodesPage,
    MetricsPoint,
    Rating,
    RATING_VALUES,
} from './types.js';

export class ServiceError extends Error {
    constructor(
        readonly status: number,
        readonly code: string,
        message: string,
    ) {
        super(message);
    }
}

async function parseError(resp: Response): Promise<ServiceError> {
    try {
        const body = await resp.json();
        return new ServiceError(
            resp.status,
            body?.error?.code ?? 'unknown',
            body?.error?.message ?? resp.statusText,
        );
    } catch {
        return new ServiceError(resp.status, 'unknown', resp.statusText);
    }
}

export class ServiceClient {
    constructor(
        readonly baseUrl: string,
        private readonly fetchFn: typeof fetch = fetch,
    ) {}

    private async get<T>(path: string): Promise<T> {
        const resp = await this.fetchFn(`${this.baseUrl}${path}`);
        if (!resp.ok) throw await parseError(resp);
        return (await resp.json()) as T;
    }

    listEpisodes(limit = 50, offset = 0): Promise<EpisodesPage> {
        return this.get(`/v1/episodes?limit=${limit}&offset=${offset}`);
    }

    getEpisode(episodeId: string): Promise<EpisodeDetail> {
        return this.get(`/v1/episodes/${encodeURIComponent(episodeId)}`);
    }

    async getMetrics(): Promise<MetricsPoint[]> {
        const body = await this.get<{ series: MetricsPoint[] }>('/v1/metrics');
        return body.series;
    }

    async submitFeedback(
        episodeId: string,
        rating: Rating,
        rater: string,
    ): Promise<void> {
        const resp = await this.fetchFn(`${this.baseUrl}/v1/feedback`, {
            method: 'POST',
            headers: { 'Content-Type': 'application/json' },
            body: JSON.stringify({
                episode_id: episodeId,
                rating: RATING_VALUES[rating],
                rater,
            }),
        });
        if (!resp.ok) throw await parseError(resp);
    }
}
