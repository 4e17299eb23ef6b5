// Wire types, mirroring the /api/v1 OpenAPI document.

export type RunType = 'GLOBAL' | 'DETECTOR_CALIBRATION' | 'COSMICS' | 'TECHNICAL';
export type RunState = 'ONGOING' | 'ENDED';
export type RunQuality = 'UNKNOWN' | 'GOOD' | 'BAD';
export type PassStatus = 'PENDING' | 'RUNNING' | 'DONE' | 'FAILED';
export type RefKind = 'RUN' | 'FILL' | 'PASS' | 'LOG' | 'TEMPLATE';

export interface EntityRef {
  kind: RefKind;
  id: number;
}

export interface ActorRef {
  actor_id: string;
  role: string;
}

export interface Page<T> {
  items: T[];
  total: number;
  offset: number;
  limit: number;
}

export interface FillOut {
  fill_number: number;
  beam_type: string;
  created_at: string;
  stable_beams_start: string | null;
  stable_beams_end: string | null;
}

export interface RunOut {
  run_number: number;
  run_type: RunType;
  state: RunState;
  start_time: string;
  end_time: string | null;
  fill_number: number | null;
  configuration: Record<string, string>;
  quality: RunQuality;
  tags: string[];
  data_set_id: string;
}

export interface PassOut {
  pass_id: number;
  name: string;
  input: EntityRef;
  status: PassStatus;
  created_at: string;
  configuration: Record<string, string>;
}

export interface AttachmentOut {
  digest: string;
  filename: string;
  media_type: string;
  size_bytes: number;
}

export interface RevisionOut {
  revision_index: number;
  title: string;
  body: string;
  edited_by: ActorRef;
  edited_at: string;
}

export interface LogOut {
  log_id: number;
  title: string;
  body: string;
  author: ActorRef;
  origin: 'HUMAN' | 'PROCESS';
  created_at: string;
  associations: EntityRef[];
  tags: string[];
  attachments: AttachmentOut[];
  revision_count: number;
}

export interface TemplateOut {
  template_name: string;
  title_pattern: string;
  body_pattern: string;
  required_fields: string[];
  default_tags: string[];
}

export interface LineageOut {
  pass_id: number;
  chain: EntityRef[];
}

export interface OverviewOut {
  time_range: { from: string | null; to: string | null };
  fill_count: number;
  run_count: number;
  log_count: number;
  pass_count: number;
  mean_runs_per_fill: number;
  runs_without_fill: number;
  duration_histogram: Record<string, number>;
  tag_frequency: Record<string, number>;
}

export interface RunsPerFillRow {
  fill_number: number;
  run_count: number;
}

export interface ErrorEnvelope {
  code: string;
  message: string;
  detail: Record<string, unknown> | null;
}

export interface LogCreatePayload {
  title?: string;
  body?: string;
  template_name?: string;
  values?: Record<string, string>;
  associations: EntityRef[];
  tags: string[];
}
