// DTOs mirroring the verification API. The server is the single source of
// truth; nothing here is derived client-side.

export interface QueueItem {
  item_id: string;
  instance_id: string;
  source_text: string;
  candidate_text: string;
  iteration: number;
  provenance: string;
  status: "pending" | "approved" | "edited" | "rejected";
  final_text: string | null;
  annotator: string;
  decided_at: string | null;
  cluster_id: number | null;
  informativeness: number | null;
  superseded_by: string | null;
}

export interface StatusCounts {
  pending: number;
  approved: number;
  edited: number;
  rejected: number;
}

export interface Progress {
  iteration: number;
  budget_remaining: number;
  batch_size: number;
  strategy: string;
  counts: StatusCounts;
  pool: Record<string, number>;
  labeled_pairs: number;
}

export interface MetricsReport {
  cs_score: number;
  safe_score: number;
  mtld: number;
  per_group_error: Record<string, number>;
  error_ratio_variance: number;
  n: number;
  per_group_counts: Record<string, [number, number]>;
}

export type Decision = "approve" | "edit" | "reject";

export interface DecisionBody {
  decision: Decision;
  final_text?: string;
  annotator: string;
  reason?: string;
}
