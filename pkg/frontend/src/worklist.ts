/** Worklist entries with monotone status transitions (lead may reopen). */

export type WorkStatus = 'unstarted' | 'in-progress' | 'signed-off';

export interface WorklistEntry {
  studyId: string;
  seriesId: string;
  status: WorkStatus;
  assignedUser: string | null;
}

const ORDER: WorkStatus[] = ['unstarted', 'in-progress', 'signed-off'];

export function advanceStatus(
  entry: WorklistEntry,
  next: WorkStatus,
  actorIsLead = false,
): WorklistEntry {
  const from = ORDER.indexOf(entry.status);
  const to = ORDER.indexOf(next);
  if (to < from && !actorIsLead) {
    throw new Error(`status may not move back from ${entry.status} to ${next}`);
  }
  return { ...entry, status: next };
}

export function buildWorklist(
  series: { id: string; study_id: string }[],
  annotations: { series_id: string; author: string; signed_off: boolean }[],
  user: string,
): WorklistEntry[] {
  const byStatus = new Map<string, WorkStatus>();
  const byUser = new Map<string, string>();
  for (const ann of annotations) {
    const current = byStatus.get(ann.series_id);
    const status: WorkStatus = ann.signed_off ? 'signed-off' : 'in-progress';
    if (!current || ORDER.indexOf(status) > ORDER.indexOf(current)) {
      byStatus.set(ann.series_id, status);
      byUser.set(ann.series_id, ann.author);
    }
  }
  return series.map((s) => ({
    studyId: s.study_id,
    seriesId: s.id,
    status: byStatus.get(s.id) ?? 'unstarted',
    assignedUser: byUser.get(s.id) ?? (byStatus.has(s.id) ? user : null),
  }));
}

/** The next unstarted entry is what the viewer prefetches in the background. */
export function nextPrefetchTarget(worklist: WorklistEntry[], currentSeries: string): string | null {
  const idx = worklist.findIndex((e) => e.seriesId === currentSeries);
  for (let i = idx + 1; i < worklist.length; i++) {
    if (worklist[i].status !== 'signed-off') return worklist[i].seriesId;
  }
  return null;
}
