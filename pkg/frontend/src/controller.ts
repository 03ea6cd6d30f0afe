// Console state machine. DOM-free: the browser bootstrap forwards
// clicks here and re-renders from the state snapshot after each change.

import { ServiceClient, ServiceError } from './api.js';
import { EpisodeDetail, EpisodesPage, MetricsPoint, Rating } from './types.js';

export interface ConsoleState {
    page: EpisodesPage;
    selected: EpisodeDetail | null;
    metrics: MetricsPoint[];
    error: string | null;
    pending: ReadonlySet<string>;
    rater: string;
}

export const METRICS_POLL_MS = 5000;

export class ConsoleController {
    private page: EpisodesPage = { total: 0, episodes: [] };
    private selected: EpisodeDetail | null = null;
    private metrics: MetricsPoint[] = [];
    private error: string | null = null;
    private pending = new Set<string>();

    constructor(
        private readonly client: ServiceClient,
        public rater: string,
        private readonly onChange: (state: ConsoleState) => void = () => {},
    ) {}

    state(): ConsoleState {
        return {
            page: this.page,
            selected: this.selected,
            metrics: this.metrics,
            error: this.error,
            pending: new Set(this.pending),
            rater: this.rater,
        };
    }

    private publish(): void {
        this.onChange(this.state());
    }

    async refreshEpisodes(limit = 50, offset = 0): Promise<void> {
        try {
            this.page = await this.client.listEpisodes(limit, offset);
            this.error = null;
        } catch (err) {
            this.error = describe(err);
        }
        this.publish();
    }

    async openEpisode(episodeId: string): Promise<void> {
        try {
            this.selected = await this.client.getEpisode(episodeId);
            this.error = null;
        } catch (err) {
            // inline error; the list stays as it was
            this.error = describe(err);
        }
        this.publish();
    }

    async refreshMetrics(): Promise<void> {
        try {
            this.metrics = await this.client.getMetrics();
            this.error = null;
        } catch (err) {
            this.error = describe(err);
        }
        this.publish();
    }

    /** Handle one rating click: exactly one POST per click, at most one
     * in flight per episode, and the episode is re-fetched afterwards so
     * the UI shows what the service actually stored. */
    async rate(episodeId: string, rating: Rating): Promise<void> {
        if (this.pending.has(episodeId)) return;
        this.pending.add(episodeId);
        this.publish();
        try {
            await this.client.submitFeedback(episodeId, rating, this.rater);
            const detail = await this.client.getEpisode(episodeId);
            this.applyRatings(episodeId, detail.ratings);
            if (this.selected?.episode_id === episodeId) {
                this.selected = detail;
            }
            this.error = null;
        } catch (err) {
            this.error = describe(err);
        } finally {
            this.pending.delete(episodeId);
            this.publish();
        }
    }

    private applyRatings(episodeId: string, ratings: Record<string, number>): void {
        this.page = {
            total: this.page.total,
            episodes: this.page.episodes.map((ep) =>
                ep.episode_id === episodeId ? { ...ep, ratings } : ep,
            ),
        };
    }
}

function describe(err: unknown): string {
    if (err instanceof ServiceError) {
        return `${err.status} ${err.code}: ${err.message}`;
    }
    return err instanceof Error ? err.message : String(err);
}
