import { test } from 'node:test';
import assert from 'node:assert/strict';

import { validateAnnotation, violationKeys } from '../src/completeness.js';
import { encodeDense, maskToBase64 } from '../src/rle.js';
import { emptyAnnotation, type AnnotationTemplate } from '../src/types.js';

const template: AnnotationTemplate = {
  template_id: 'tpl',
  fields: [
    { field_id: 'quality', level: 'series', vocabulary: ['good', 'bad'], required: true },
    { field_id: 'slice_ok', level: 'slice', vocabulary: ['yes', 'no'], required: true },
    { field_id: 'finding', level: 'region', vocabulary: ['lesion'], required: true },
  ],
};

function maskB64(label: string): string {
  return maskToBase64(encodeDense(Uint8Array.from([1, 0, 0, 0, 0, 0, 0, 0]), [2, 2, 2], label));
}

test('complete annotation passes', () => {
  const ann = emptyAnnotation('st', 'se', 'u');
  ann.series_labels = { quality: 'good' };
  ann.slice_labels = { slice_ok: { '0': 'yes', '1': 'no' } };
  ann.masks = [maskB64('lesion')];
  const report = validateAnnotation(ann, template, 2);
  assert.equal(report.complete, true);
});

test('each violation kind is reported', () => {
  const ann = emptyAnnotation('st', 'se', 'u');
  ann.series_labels = { quality: 'excellent', ghost: 'x' };
  ann.slice_labels = { slice_ok: { '0': 'yes' } }; // slice 1 uncovered
  ann.masks = [maskB64('tumor')];
  const report = validateAnnotation(ann, template, 2);
  const keys = violationKeys(report);
  assert.deepEqual(keys, [
    '<region>:out_of_vocabulary',
    'finding:missing',
    'ghost:unknown_field',
    'quality:out_of_vocabulary',
    'slice_ok:missing',
  ]);
});

test('slice coverage only enforced when slice count known', () => {
  const ann = emptyAnnotation('st', 'se', 'u');
  ann.series_labels = { quality: 'good' };
  ann.slice_labels = { slice_ok: { '0': 'yes' } };
  ann.masks = [maskB64('lesion')];
  assert.equal(validateAnnotation(ann, template, null).complete, true);
  assert.equal(validateAnnotation(ann, template, 3).complete, false);
});
