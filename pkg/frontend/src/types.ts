export const OUTCOMES = ["correct", "wrong_onset", "noise_dominated", "no_bird"] as const;
export type Outcome = (typeof OUTCOMES)[number];

export interface AuditPlan {
  p_hat: number;
  margin: number;
  confidence_z: number;
  population: number;
  n0: number;
  n_star: number;
  seed: number;
  sampled_clip_ids: string[];
  round_id: number;
  progress: { done: number; total: number };
}

export interface VerdictBody {
  clip_id: string;
  outcome: Outcome;
  corrected_start_s?: number;
  auditor: string;
}

export interface SourceInfo {
  clip_id: string;
  catalog_id: number;
  duration_s: number;
  start_s: number;
}

export interface SubmitResponse {
  recorded: boolean;
  clip_id: string;
  outcome: Outcome;
  progress: { done: number; total: number };
  replacement_clip_id?: string | null;
  reextracted_at_s?: number;
}
