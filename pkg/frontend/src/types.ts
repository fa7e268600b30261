// Wire shapes of the labeling service's JSON endpoints, plus the client's
// own view of a round in progress.

export type SessionState = 'idle' | 'training' | 'awaiting_labels';

export interface StatusInfo {
  round: number;
  labeled_count: number;
  unlabeled_count: number;
  state: SessionState;
  budget: number;
  n_classes: number;
  batch_ids: number[];
}

export interface SamplePayload {
  // 2-D projection for display plus the raw feature row; image datasets
  // also carry the square side length so features can be painted as pixels.
  xy: [number, number];
  features: number[];
  image_side?: number;
}

export interface BatchItemWire {
  id: number;
  d_prob: number;
  entropy: number;
  payload: SamplePayload;
}

export interface RoundBatch {
  round: number;
  batch: BatchItemWire[];
}

export interface SubmitResult {
  accepted: number;
  remaining: number;
  round?: number;
  accuracy?: number | null;
}

export interface CurvePoint {
  round: number;
  labeled_count: number;
  accuracy: number | null;
}

export interface CurveInfo {
  dataset: string;
  budget: number;
  points: CurvePoint[];
}

// One card of the current batch. chosenLabel starts null and is only ever
// set by an explicit human action; nothing in the client defaults it.
export interface BatchViewItem {
  id: number;
  d_prob: number;
  entropy: number;
  payload: SamplePayload;
  chosenLabel: number | null;
}

export interface BatchView {
  round: number;
  nClasses: number;
  items: BatchViewItem[];
}
