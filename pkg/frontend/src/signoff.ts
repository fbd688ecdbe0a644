/**
 * The annotate-and-sign-off flow. The sign-off button is enabled only when
 * the client-side completeness check passes; the server re-validates on the
 * actual sign-off call and its rejection report is rendered inline at the
 * offending fields.
 */

import { ApiClient, ApiError } from './api.js';
import { validateAnnotation } from './completeness.js';
import type { AnnotationDoc, AnnotationTemplate, CompletenessReport } from './types.js';

export interface SignOffUiState {
  enabled: boolean;
  /** field_id -> human-readable problem, for inline tooltips */
  fieldProblems: Record<string, string>;
}

export function signOffUiState(
  ann: AnnotationDoc,
  template: AnnotationTemplate,
  nSlices: number | null,
): SignOffUiState {
  const report = validateAnnotation(ann, template, nSlices);
  const fieldProblems: Record<string, string> = {};
  for (const v of report.violations) {
    fieldProblems[v.field_id] = `${v.reason.replace(/_/g, ' ')}: ${v.detail}`;
  }
  return { enabled: report.complete, fieldProblems };
}

export interface SignOffOutcome {
  ok: boolean;
  version: number | null;
  serverReport: CompletenessReport | null;
}

/** Upload the draft then sign it off; surfaces the server's report on 422. */
export async function uploadAndSignOff(
  api: ApiClient,
  projectId: string,
  ann: AnnotationDoc,
  opts: { annId?: string; baseVersion?: number } = {},
): Promise<SignOffOutcome & { annId: string | null }> {
  const upload = await api.uploadAnnotation(ann.target[1], projectId, ann, opts);
  try {
    const receipt = await api.signOff(upload.annotation_id);
    return { ok: true, version: receipt.version, serverReport: null, annId: upload.annotation_id };
  } catch (err) {
    if (err instanceof ApiError && err.status === 422) {
      const detail = err.detail as { report?: CompletenessReport };
      return {
        ok: false,
        version: upload.version,
        serverReport: detail.report ?? null,
        annId: upload.annotation_id,
      };
    }
    throw err;
  }
}
