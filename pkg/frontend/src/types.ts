// Wire types mirroring the service API verbatim. The console renders
// these as-is and never computes rewards or Q-values itself.

export type Rating = 'good' | 'unsure' | 'hallucination';

export const RATING_VALUES: Record<Rating, number> = {
    good: 1,
    unsure: 0,
    hallucination: -1,
};

export interface RewardSummary {
    value: number;
    kind: string;
}

export interface EpisodeSummary {
    episode_id: string;
    instance_id: string;
    query: string;
    answer: string | null;
    template_id: number;
    support_size: number;
    reward: RewardSummary | null;
    ratings: Record<string, number>;
}

export interface EpisodesPage {
    total: number;
    episodes: EpisodeSummary[];
}

export interface SupportDoc {
    doc_id: string;
    text: string;
}

export interface EpisodeDetail {
    episode_id: string;
    query: string;
    task_description: string;
    template_id: number;
    template_style: string;
    prompt_text: string;
    support: SupportDoc[];
    response: { text: string; latency: number; backend: string };
    reward: { value: number; kind: string; source: string };
    ratings: Record<string, number>;
}

export interface MetricsPoint {
    episode: number;
    reward: number;
    loss: number | null;
    epsilon: number;
    support_size: number;
    damaging_included: boolean;
    template_id: number;
}

export interface ApiError {
    error: { code: string; message: string };
}
