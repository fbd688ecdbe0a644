/**
 * Client-side completeness check gating the sign-off button. Mirrors the
 * server's semantics exactly; the server re-validates on sign-off and the
 * end-to-end tests assert the two verdicts agree on fuzzed forms.
 */

import type { AnnotationDoc, AnnotationTemplate, CompletenessReport, Violation } from './types.js';
import { maskFromBase64 } from './rle.js';

export function validateAnnotation(
  ann: AnnotationDoc,
  template: AnnotationTemplate,
  nSlices: number | null = null,
): CompletenessReport {
  const violations: Violation[] = [];
  const byId = new Map(template.fields.map((f) => [f.field_id, f]));

  const checkLevel = (labels: Record<string, string>, level: 'study' | 'series') => {
    for (const [fid, value] of Object.entries(labels)) {
      const f = byId.get(fid);
      if (!f || f.level !== level) {
        violations.push({ field_id: fid, reason: 'unknown_field', detail: `not a ${level}-level template field` });
      } else if (!f.vocabulary.includes(value)) {
        violations.push({ field_id: fid, reason: 'out_of_vocabulary', detail: `value '${value}'` });
      }
    }
    for (const f of template.fields) {
      if (f.level === level && f.required && !(f.field_id in labels)) {
        violations.push({ field_id: f.field_id, reason: 'missing', detail: `required ${level}-level field` });
      }
    }
  };
  checkLevel(ann.study_labels, 'study');
  checkLevel(ann.series_labels, 'series');

  for (const [fid, perSlice] of Object.entries(ann.slice_labels)) {
    const f = byId.get(fid);
    if (!f || f.level !== 'slice') {
      violations.push({ field_id: fid, reason: 'unknown_field', detail: 'not a slice-level template field' });
      continue;
    }
    for (const [z, value] of Object.entries(perSlice)) {
      if (!f.vocabulary.includes(value)) {
        violations.push({ field_id: fid, reason: 'out_of_vocabulary', detail: `slice ${z} value '${value}'` });
      }
    }
  }
  for (const f of template.fields) {
    if (f.level !== 'slice' || !f.required) continue;
    const perSlice = ann.slice_labels[f.field_id] ?? {};
    const covered = new Set(Object.keys(perSlice).map(Number));
    if (covered.size === 0) {
      violations.push({ field_id: f.field_id, reason: 'missing', detail: 'required slice-level field' });
    } else if (nSlices !== null) {
      const uncovered: number[] = [];
      for (let z = 0; z < nSlices; z++) if (!covered.has(z)) uncovered.push(z);
      if (uncovered.length) {
        violations.push({
          field_id: f.field_id,
          reason: 'missing',
          detail: `slices without a value: ${uncovered.slice(0, 8).join(', ')}`,
        });
      }
    }
  }

  const regionVocab = new Set<string>();
  for (const f of template.fields) {
    if (f.level === 'region') for (const v of f.vocabulary) regionVocab.add(v);
  }
  const regionLabels = [
    ...ann.boxes.map((b) => b.label),
    ...ann.masks.map((m) => maskFromBase64(m).label),
  ];
  for (const label of regionLabels) {
    if (!regionVocab.has(label)) {
      violations.push({ field_id: '<region>', reason: 'out_of_vocabulary', detail: `region label '${label}'` });
    }
  }
  for (const f of template.fields) {
    if (f.level === 'region' && f.required && !regionLabels.some((l) => f.vocabulary.includes(l))) {
      violations.push({ field_id: f.field_id, reason: 'missing', detail: 'no region labeled from this vocabulary' });
    }
  }

  return { complete: violations.length === 0, violations };
}

/** Stable key set for comparing two reports regardless of detail text. */
export function violationKeys(report: CompletenessReport): string[] {
  return [...new Set(report.violations.map((v) => `${v.field_id}:${v.reason}`))].sort();
}
