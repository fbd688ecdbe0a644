/**
 * Typed client for the platform API. The client holds no authoritative
 * state: every mutation round-trips through the server and the server's
 * verdicts (versions, completeness, authorization) are the truth.
 */

import type {
  AnnotationDoc,
  CompletenessReport,
  ProjectRecord,
  ProposalResponse,
  SeriesRecord,
  SnapshotInfo,
} from './types.js';

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: unknown,
  ) {
    super(`API error ${status}: ${JSON.stringify(detail)}`);
  }
}

export interface UploadResult {
  annotation_id: string;
  version: number;
}

export class ApiClient {
  private token: string | null = null;

  constructor(public baseUrl: string) {}

  private headers(): Record<string, string> {
    const h: Record<string, string> = { 'Content-Type': 'application/json' };
    if (this.token) h['Authorization'] = `Bearer ${this.token}`;
    return h;
  }

  private async call<T>(method: string, path: string, body?: unknown): Promise<T> {
    const res = await fetch(`${this.baseUrl}${path}`, {
      method,
      headers: this.headers(),
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const data = res.status === 204 ? null : await res.json();
    if (!res.ok) throw new ApiError(res.status, (data as { detail?: unknown })?.detail ?? data);
    return data as T;
  }

  async login(userId: string, password: string): Promise<string[]> {
    const out = await this.call<{ token: string; roles: string[] }>('POST', '/auth/login', {
      user_id: userId,
      password,
    });
    this.token = out.token;
    return out.roles;
  }

  get authToken(): string | null {
    return this.token;
  }

  listProjects(): Promise<ProjectRecord[]> {
    return this.call('GET', '/projects');
  }

  getProject(projectId: string): Promise<ProjectRecord> {
    return this.call('GET', `/projects/${projectId}`);
  }

  listSeries(params: { modality?: string } = {}): Promise<SeriesRecord[]> {
    const q = params.modality ? `?modality=${encodeURIComponent(params.modality)}` : '';
    return this.call('GET', `/series${q}`);
  }

  getSeries(seriesId: string): Promise<SeriesRecord> {
    return this.call('GET', `/series/${seriesId}`);
  }

  /** Raw streaming response; the viewer consumes its body progressively. */
  async openSeriesStream(seriesId: string): Promise<Response> {
    const res = await fetch(`${this.baseUrl}/series/${seriesId}/stream`, {
      headers: this.headers(),
    });
    if (!res.ok) throw new ApiError(res.status, await res.json().catch(() => null));
    return res;
  }

  prefetchSeries(seriesId: string): Promise<{ prefetching: string }> {
    return this.call('POST', `/series/${seriesId}/prefetch`);
  }

  uploadAnnotation(
    seriesId: string,
    projectId: string,
    annotation: AnnotationDoc,
    opts: { annId?: string; baseVersion?: number; synthetic?: boolean } = {},
  ): Promise<UploadResult> {
    return this.call('POST', `/series/${seriesId}/annotations`, {
      project_id: projectId,
      annotation,
      ann_id: opts.annId ?? null,
      base_version: opts.baseVersion ?? 0,
      synthetic: opts.synthetic ?? false,
    });
  }

  getAnnotation(annId: string): Promise<{ record: Record<string, unknown>; annotation: AnnotationDoc }> {
    return this.call('GET', `/annotations/${annId}`);
  }

  listAnnotations(seriesId: string, projectId: string): Promise<Record<string, unknown>[]> {
    return this.call('GET', `/series/${seriesId}/annotations?project_id=${encodeURIComponent(projectId)}`);
  }

  signOff(annId: string): Promise<{ annotation_id: string; version: number; signed_off: boolean }> {
    return this.call('POST', `/annotations/${annId}/signoff`);
  }

  /** Server-side dry-run of the completeness check. */
  validateAnnotation(projectId: string, annotation: AnnotationDoc, nSlices?: number): Promise<CompletenessReport> {
    return this.call('POST', `/projects/${projectId}/validate-annotation`, {
      annotation,
      n_slices: nSlices ?? null,
    });
  }

  getProposal(projectId: string, seriesId: string): Promise<ProposalResponse> {
    return this.call('GET', `/projects/${projectId}/series/${seriesId}/proposal`);
  }

  listSnapshots(projectId: string): Promise<SnapshotInfo[]> {
    return this.call('GET', `/projects/${projectId}/snapshots`);
  }

  getReport(projectId: string, kind: 'progress' | 'inter_rater' | 'audit'): Promise<Record<string, unknown>> {
    return this.call('GET', `/projects/${projectId}/reports/${kind}`);
  }

  getCohort(cohortId: string): Promise<{ id: string; members: string[]; open: boolean }> {
    return this.call('GET', `/cohorts/${cohortId}`);
  }

  listNotes(seriesId: string): Promise<Record<string, unknown>[]> {
    return this.call('GET', `/series/${seriesId}/notes`);
  }
}
