/**
 * Active-ML proposal review: fetch, overlay, accept into the editable
 * annotation. A proposal stays visually and semantically distinct (model
 * author, machine_proposed flag) until the human accepts it, and accepting
 * only copies content -- sign-off is still the human's act, under their
 * name.
 */

import { ApiClient, ApiError } from './api.js';
import type { AnnotationDoc, ProposalResponse } from './types.js';

export interface ProposalViewState {
  available: boolean;
  statusText: string;
  modelVersion: number | null;
  proposal: AnnotationDoc | null;
}

export async function fetchProposal(
  api: ApiClient,
  projectId: string,
  seriesId: string,
): Promise<ProposalViewState> {
  let res: ProposalResponse;
  try {
    res = await api.getProposal(projectId, seriesId);
  } catch (err) {
    if (err instanceof ApiError) {
      // non-blocking: annotation work continues without the overlay
      return { available: false, statusText: `proposal unavailable (${err.status})`, modelVersion: null, proposal: null };
    }
    throw err;
  }
  if (res.status !== 'ready' || !res.annotation) {
    return {
      available: false,
      statusText: 'model not mature yet',
      modelVersion: null,
      proposal: null,
    };
  }
  return {
    available: true,
    statusText: `proposal from model v${res.model_version}`,
    modelVersion: res.model_version ?? null,
    proposal: res.annotation,
  };
}

/**
 * Copy proposal content into the user's working annotation. The result is
 * the human's editable draft: authored by them, not machine-proposed.
 */
export function acceptProposal(working: AnnotationDoc, proposal: AnnotationDoc): AnnotationDoc {
  return {
    ...working,
    study_labels: { ...working.study_labels, ...proposal.study_labels },
    series_labels: { ...working.series_labels, ...proposal.series_labels },
    slice_labels: { ...working.slice_labels, ...proposal.slice_labels },
    boxes: [...working.boxes, ...proposal.boxes],
    masks: [...working.masks, ...proposal.masks],
    machine_proposed: false,
    model_version: null,
  };
}
