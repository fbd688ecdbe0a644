/** Shared shapes mirrored from the server's documented JSON formats. */

export interface TemplateField {
  field_id: string;
  level: 'study' | 'series' | 'slice' | 'region';
  vocabulary: string[];
  required: boolean;
}

export interface AnnotationTemplate {
  template_id: string;
  fields: TemplateField[];
}

export interface BoundingBox {
  slice_range: [number, number];
  y0: number;
  x0: number;
  y1: number;
  x1: number;
  label: string;
}

/** Annotation document as uploaded/downloaded (masks are base64 RLE blobs). */
export interface AnnotationDoc {
  target: [string, string];
  author: string;
  study_labels: Record<string, string>;
  series_labels: Record<string, string>;
  slice_labels: Record<string, Record<string, string>>;
  boxes: BoundingBox[];
  masks: string[];
  version: number;
  signed_off: boolean;
  machine_proposed: boolean;
  model_version: number | null;
}

export function emptyAnnotation(studyId: string, seriesId: string, author: string): AnnotationDoc {
  return {
    target: [studyId, seriesId],
    author,
    study_labels: {},
    series_labels: {},
    slice_labels: {},
    boxes: [],
    masks: [],
    version: 0,
    signed_off: false,
    machine_proposed: false,
    model_version: null,
  };
}

export interface SeriesRecord {
  id: string;
  study_id: string;
  dims: [number, number, number];
  spacing_mm: [number, number, number];
  rescale: [number, number];
  Modality?: string;
  [key: string]: unknown;
}

export interface Violation {
  field_id: string;
  reason: 'missing' | 'out_of_vocabulary' | 'unknown_field';
  detail: string;
}

export interface CompletenessReport {
  complete: boolean;
  violations: Violation[];
}

export interface ProjectRecord {
  id: string;
  name: string;
  protocol_id: string;
  template: AnnotationTemplate;
  trainer?: string;
}

export interface SnapshotInfo {
  version: number;
  metric_name: string;
  metric_value: number;
  frozen: boolean;
  created_at: number;
}

export interface ProposalResponse {
  status: 'ready' | 'not_mature';
  model_version?: number;
  metric_value?: number;
  annotation?: AnnotationDoc;
}
