/**
 * Typed client for the labeling service HTTP protocol (v1).
 *
 * All label mutations go through these endpoints; the UI never touches
 * label storage directly.
 */

export interface KeypointTypeSpec {
  name: string;
  ambiguous: boolean;
}

export interface Category {
  name: string;
  keypoints: KeypointTypeSpec[];
}

export interface FramePayload {
  index: number;
  timestamp: number;
  image_url: string;
  width: number;
  height: number;
}

export interface SessionPayload {
  protocol: number;
  session_id: string;
  sequence_id: string;
  frame_count: number;
  frame_a: FramePayload;
  frame_b: FramePayload;
  pair_quality: number;
  committed_objects: number;
  pending: boolean;
}

export interface SwapPayload extends SessionPayload {
  wrapped: boolean;
}

export interface SequenceInfo {
  sequence_id: string;
  frames: number;
  labeled_objects: number;
  split: string;
}

export interface ClicksResult {
  points_3d: number[][];
  center_3d: number[];
  residuals_a: number[];
  residuals_b: number[];
}

export interface OverlayKeypoint {
  type: number;
  type_name: string;
  position: [number, number] | null;
  visible: boolean;
}

export interface OverlayObject {
  category: string;
  pending: boolean;
  keypoints: OverlayKeypoint[];
  center: { position: [number, number] | null; visible: boolean };
}

export interface OverlayPayload {
  frame: number;
  objects: OverlayObject[];
}

export class ServiceError extends Error {
  constructor(readonly status: number, detail: string) {
    super(`service error ${status}: ${detail}`);
  }
}

export class LabelServiceClient {
  constructor(readonly baseUrl: string) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await fetch(`${this.baseUrl}${path}`, {
      method,
      headers: body === undefined ? undefined : { 'content-type': 'application/json' },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const doc = await response.json();
        if (doc && typeof doc.detail === 'string') detail = doc.detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ServiceError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  version(): Promise<{ protocol: number }> {
    return this.request('GET', '/api/version');
  }

  sequences(): Promise<{ protocol: number; sequences: SequenceInfo[] }> {
    return this.request('GET', '/sequences');
  }

  openSession(sequenceId: string): Promise<SessionPayload> {
    return this.request('POST', '/sessions', { sequence_id: sequenceId });
  }

  sessionState(sessionId: string): Promise<SessionPayload> {
    return this.request('GET', `/sessions/${sessionId}`);
  }

  swapFrame(sessionId: string, slot: 'a' | 'b'): Promise<SwapPayload> {
    return this.request('POST', `/sessions/${sessionId}/swap`, { slot });
  }

  submitClicks(
    sessionId: string,
    category: Category,
    clickTypes: number[],
    clicksA: number[][],
    clicksB: number[][],
  ): Promise<ClicksResult> {
    return this.request('POST', `/sessions/${sessionId}/clicks`, {
      category,
      click_types: clickTypes,
      clicks_a: clicksA,
      clicks_b: clicksB,
    });
  }

  commit(sessionId: string): Promise<{ committed_objects: number }> {
    return this.request('POST', `/sessions/${sessionId}/commit`);
  }

  backproject(sessionId: string, frame: number): Promise<OverlayPayload> {
    return this.request('GET', `/sessions/${sessionId}/backproject?frame=${frame}`);
  }

  frameImageUrl(sessionId: string, frame: number, camera: 'left' | 'right' = 'left'): string {
    return `${this.baseUrl}/sessions/${sessionId}/frames/${frame}/image?camera=${camera}`;
  }
}
