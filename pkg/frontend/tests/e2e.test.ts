/**
 * Scripted end-to-end labeling flow against the live service: open a
 * session on an unlabeled synthetic valve sequence, click all four
 * keypoints in both views, triangulate, validate the overlay, commit,
 * and check the persisted 3D labels against simulator ground truth.
 */

import { readFileSync } from 'node:fs';
import { join } from 'node:path';
import { beforeAll, describe, expect, it } from 'vitest';

import { type Category, LabelServiceClient } from '../src/api.js';
import { LabelController } from '../src/controller.js';
import { IDENTITY, imageToCanvas } from '../src/overlay.js';
import { CONTEXT_PATH } from './globalSetup.js';

interface Fixture {
  sequence_id: string;
  category: Category & { keypoints: { name: string; ambiguous: boolean }[] };
  click_types: number[];
  gt_points: number[][];
  clicks_per_frame: Record<string, ([number, number] | null)[]>;
}

interface Context {
  baseUrl: string;
  dataDir: string;
  fixturePath: string;
}

let context: Context;
let fixture: Fixture;

beforeAll(() => {
  context = JSON.parse(readFileSync(CONTEXT_PATH, 'utf8')) as Context;
  fixture = JSON.parse(readFileSync(context.fixturePath, 'utf8')) as Fixture;
});

function distance3(a: number[], b: number[]): number {
  return Math.hypot(a[0]! - b[0]!, a[1]! - b[1]!, a[2]! - b[2]!);
}

describe('labeling flow against the live service', () => {
  it('labels one valve, commits, and persists labels within 1 cm of ground truth', async () => {
    const api = new LabelServiceClient(context.baseUrl);
    expect((await api.version()).protocol).toBe(1);

    const controller = new LabelController(api, fixture.category);
    const session = await controller.open(fixture.sequence_id);
    expect(session.committed_objects).toBe(0);

    const a = controller.frameIndex('a');
    const b = controller.frameIndex('b');
    expect(a).not.toBe(b);

    // 4 clicks per view at the exact projections, hub first then spokes
    const clicksA = fixture.clicks_per_frame[String(a)]!;
    const clicksB = fixture.clicks_per_frame[String(b)]!;
    for (let k = 0; k < fixture.click_types.length; k++) {
      controller.state.activeType = fixture.click_types[k]!;
      const pa = clicksA[k]!;
      const pb = clicksB[k]!;
      expect(controller.clickAt('a', { x: pa[0], y: pa[1] })).toBe(true);
      expect(controller.clickAt('b', { x: pb[0], y: pb[1] })).toBe(true);
    }
    expect(controller.state.clickCount('a')).toBe(4);
    expect(controller.state.clickCount('b')).toBe(4);
    expect(controller.canSubmit()).toBe(true);

    const result = await controller.submit();
    expect(result.points_3d).toHaveLength(4);
    const worstResidual = Math.max(...result.residuals_a, ...result.residuals_b);
    expect(worstResidual).toBeLessThan(1e-6);
    for (let k = 0; k < 4; k++) {
      expect(distance3(result.points_3d[k]!, fixture.gt_points[k]!)).toBeLessThan(0.01);
    }

    // validate by cycling: overlay positions equal the service's
    // backprojections exactly at zoom 1 (well within 0.5 px)
    for (const frame of [a, b, Math.floor((a + b) / 2)]) {
      const overlay = await controller.overlay(frame);
      expect(overlay.objects).toHaveLength(1);
      const pendingObject = overlay.objects[0]!;
      expect(pendingObject.pending).toBe(true);
      for (const kp of pendingObject.keypoints) {
        if (!kp.position) continue;
        const rendered = imageToCanvas(IDENTITY, { x: kp.position[0], y: kp.position[1] });
        const err = Math.hypot(rendered.x - kp.position[0], rendered.y - kp.position[1]);
        expect(err).toBeLessThanOrEqual(0.5);
      }
    }

    const committed = await controller.commit();
    expect(committed).toBe(1);

    // the service is the source of truth: the labels file now holds the object
    const labelsPath = join(context.dataDir, fixture.sequence_id, 'labels.json');
    const labels = JSON.parse(readFileSync(labelsPath, 'utf8'));
    expect(labels.version).toBe(1);
    expect(labels.objects).toHaveLength(1);
    const persisted: number[][] = [
      ...labels.objects[0].keypoints.hub,
      ...labels.objects[0].keypoints.spoke,
    ];
    expect(persisted).toHaveLength(4);
    for (let k = 0; k < 4; k++) {
      expect(distance3(persisted[k]!, fixture.gt_points[k]!)).toBeLessThan(0.01);
    }
  });

  it('swap replaces exactly one view and clears its clicks', async () => {
    const api = new LabelServiceClient(context.baseUrl);
    const controller = new LabelController(api, fixture.category);
    await controller.open(fixture.sequence_id);
    const a0 = controller.frameIndex('a');
    const b0 = controller.frameIndex('b');
    controller.clickAt('a', { x: 100, y: 100 });
    const payload = await controller.swap('b');
    expect(controller.frameIndex('a')).toBe(a0);
    expect(controller.frameIndex('b')).not.toBe(b0);
    expect(payload.wrapped).toBe(false);
    // clicks in the untouched view survive the swap
    expect(controller.state.clickCount('a')).toBe(1);
    expect(controller.state.clickCount('b')).toBe(0);
  });

  it('rejects mismatched click submissions', async () => {
    const api = new LabelServiceClient(context.baseUrl);
    const controller = new LabelController(api, fixture.category);
    const session = await controller.open(fixture.sequence_id);
    await expect(
      api.submitClicks(session.session_id, fixture.category, [0], [[1, 1]], []),
    ).rejects.toThrow(/422|disagree/);
  });

  it('serves PNG placeholder frames', async () => {
    const api = new LabelServiceClient(context.baseUrl);
    const controller = new LabelController(api, fixture.category);
    await controller.open(fixture.sequence_id);
    const response = await fetch(controller.imageUrl('a'));
    expect(response.headers.get('content-type')).toBe('image/png');
    const bytes = new Uint8Array(await response.arrayBuffer());
    expect([...bytes.slice(0, 4)]).toEqual([0x89, 0x50, 0x4e, 0x47]);
  });
});
