/**
 * Management dashboard data layer: progress, cohort membership with live
 * additions, snapshot metric timeline, audit export. Authorization trims
 * the view -- annotators simply never see management controls because the
 * server denies the report endpoints.
 */

import { ApiClient, ApiError } from './api.js';
import type { SnapshotInfo } from './types.js';

export interface DashboardView {
  managementVisible: boolean;
  progress: Record<string, unknown> | null;
  snapshots: SnapshotInfo[];
  cohortMembers: string[];
  auditRows: number;
}

export async function loadDashboard(
  api: ApiClient,
  projectId: string,
  cohortId: string | null,
): Promise<DashboardView> {
  let progress: Record<string, unknown> | null = null;
  let auditRows = 0;
  let managementVisible = true;
  try {
    progress = await api.getReport(projectId, 'progress');
    const audit = await api.getReport(projectId, 'audit');
    auditRows = ((audit.events ?? []) as unknown[]).length;
  } catch (err) {
    if (err instanceof ApiError && err.status === 403) {
      managementVisible = false; // authorization-driven view trimming
    } else {
      throw err;
    }
  }
  let snapshots: SnapshotInfo[] = [];
  try {
    snapshots = await api.listSnapshots(projectId);
  } catch (err) {
    if (!(err instanceof ApiError && err.status === 403)) throw err;
  }
  let cohortMembers: string[] = [];
  if (cohortId) {
    try {
      cohortMembers = (await api.getCohort(cohortId)).members;
    } catch (err) {
      if (!(err instanceof ApiError && err.status === 403)) throw err;
    }
  }
  return { managementVisible, progress, snapshots, cohortMembers, auditRows };
}

/** Snapshot metric timeline points, oldest first. */
export function metricTimeline(snapshots: SnapshotInfo[]): { version: number; value: number }[] {
  return [...snapshots]
    .sort((a, b) => a.version - b.version)
    .map((s) => ({ version: s.version, value: s.metric_value }));
}
