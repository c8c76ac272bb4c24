/**
 * Click bookkeeping for labeling one object in two views.
 *
 * A slot is one keypoint of the object: its type plus a click in each
 * view. Both views share the slot order, so the submitted click lists
 * always line up keypoint-for-keypoint. Non-ambiguous types accept a
 * single slot per object; ambiguous types (several interchangeable
 * keypoints on one object) accept any number.
 */

import type { Category } from './api.js';
import type { Point } from './overlay.js';

export type ViewSlot = 'a' | 'b';

export interface ClickSlot {
  type: number;
  a: Point | null;
  b: Point | null;
}

export class LabelingState {
  readonly category: Category;
  slots: ClickSlot[] = [];
  activeType = 0;

  constructor(category: Category) {
    if (category.keypoints.length < 1) {
      throw new Error('category needs at least one keypoint type');
    }
    this.category = category;
  }

  get typeCount(): number {
    return this.category.keypoints.length;
  }

  typeName(index: number): string {
    return this.category.keypoints[index]?.name ?? `type ${index}`;
  }

  private isAmbiguous(type: number): boolean {
    return this.category.keypoints[type]?.ambiguous ?? false;
  }

  /** Record a click of the active type; false when the type is already fully clicked. */
  clickAt(view: ViewSlot, point: Point): boolean {
    const type = this.activeType;
    let slot = this.slots.find((s) => s.type === type && s[view] === null);
    if (!slot) {
      const existing = this.slots.filter((s) => s.type === type).length;
      if (!this.isAmbiguous(type) && existing >= 1) {
        return false;
      }
      slot = { type, a: null, b: null };
      this.slots.push(slot);
    }
    slot[view] = point;
    if (!this.isAmbiguous(type) && slot.a !== null && slot.b !== null) {
      this.nextKeypoint();
    }
    return true;
  }

  /** Remove the most recent click in one view; drops the slot when it empties. */
  undo(view: ViewSlot): boolean {
    for (let i = this.slots.length - 1; i >= 0; i--) {
      const slot = this.slots[i]!;
      if (slot[view] !== null) {
        slot[view] = null;
        this.activeType = slot.type;
        if (slot.a === null && slot.b === null) {
          this.slots.splice(i, 1);
        }
        return true;
      }
    }
    return false;
  }

  nextKeypoint(): void {
    this.activeType = (this.activeType + 1) % this.typeCount;
  }

  clicksFor(view: ViewSlot): Point[] {
    return this.slots.filter((s) => s[view] !== null).map((s) => s[view]!);
  }

  clickCount(view: ViewSlot): number {
    return this.slots.reduce((n, s) => n + (s[view] !== null ? 1 : 0), 0);
  }

  clickTypes(): number[] {
    return this.slots.map((s) => s.type);
  }

  /** Every slot has a click in both views and there is at least one slot. */
  complete(): boolean {
    return this.slots.length > 0 && this.slots.every((s) => s.a !== null && s.b !== null);
  }

  /** Submission payload: aligned click lists plus their type indices. */
  payload(): { clickTypes: number[]; clicksA: number[][]; clicksB: number[][] } {
    if (!this.complete()) {
      throw new Error('cannot submit: some keypoints are missing a click');
    }
    return {
      clickTypes: this.clickTypes(),
      clicksA: this.slots.map((s) => [s.a!.x, s.a!.y]),
      clicksB: this.slots.map((s) => [s.b!.x, s.b!.y]),
    };
  }

  reset(): void {
    this.slots = [];
    this.activeType = 0;
  }
}
