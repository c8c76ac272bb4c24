/**
 * Session flow: open -> click both views -> submit -> inspect -> commit.
 *
 * Holds the session payload, the click state and the last triangulation
 * result; every mutation of persisted labels goes through the service.
 * The DOM layer and the end-to-end tests drive this class the same way.
 */

import {
  type Category,
  type ClicksResult,
  type OverlayPayload,
  type SessionPayload,
  type SwapPayload,
  LabelServiceClient,
} from './api.js';
import { LabelingState, type ViewSlot } from './state.js';
import type { Point } from './overlay.js';

export class LabelController {
  readonly api: LabelServiceClient;
  readonly category: Category;
  session: SessionPayload | null = null;
  state: LabelingState;
  lastResult: ClicksResult | null = null;

  constructor(api: LabelServiceClient, category: Category) {
    this.api = api;
    this.category = category;
    this.state = new LabelingState(category);
  }

  private get sessionId(): string {
    if (!this.session) throw new Error('no open session');
    return this.session.session_id;
  }

  async open(sequenceId: string): Promise<SessionPayload> {
    this.session = await this.api.openSession(sequenceId);
    this.state.reset();
    this.lastResult = null;
    return this.session;
  }

  frameIndex(view: ViewSlot): number {
    if (!this.session) throw new Error('no open session');
    return view === 'a' ? this.session.frame_a.index : this.session.frame_b.index;
  }

  clickAt(view: ViewSlot, imagePoint: Point): boolean {
    // a new click invalidates the previous triangulation
    this.lastResult = null;
    return this.state.clickAt(view, imagePoint);
  }

  undo(view: ViewSlot): boolean {
    this.lastResult = null;
    return this.state.undo(view);
  }

  canSubmit(): boolean {
    return this.session !== null && this.state.complete();
  }

  async submit(): Promise<ClicksResult> {
    const { clickTypes, clicksA, clicksB } = this.state.payload();
    this.lastResult = await this.api.submitClicks(
      this.sessionId,
      this.category,
      clickTypes,
      clicksA,
      clicksB,
    );
    return this.lastResult;
  }

  async commit(): Promise<number> {
    const response = await this.api.commit(this.sessionId);
    this.state.reset();
    this.lastResult = null;
    return response.committed_objects;
  }

  async swap(slot: ViewSlot): Promise<SwapPayload> {
    const payload = await this.api.swapFrame(this.sessionId, slot);
    this.session = payload;
    // clicks in the replaced view no longer correspond to what is on screen
    while (this.state.undo(slot)) {
      // drop them all
    }
    this.lastResult = null;
    return payload;
  }

  overlay(frame: number): Promise<OverlayPayload> {
    return this.api.backproject(this.sessionId, frame);
  }

  imageUrl(view: ViewSlot): string {
    return this.api.frameImageUrl(this.sessionId, this.frameIndex(view));
  }
}
