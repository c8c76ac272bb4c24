/**
 * DOM wiring: sequence picker, the two labeling views, the validation
 * view for cycling through frames, keyboard shortcuts and status line.
 *
 * Shortcuts: n next keypoint, u undo (last-clicked view), q/w swap view
 * A/B, [ and ] cycle the validation frame, Enter submit, c commit,
 * 0 reset zoom.
 */

import { type Category, LabelServiceClient, ServiceError } from './api.js';
import { LabelController } from './controller.js';
import { formatResidual, residualLevel } from './overlay.js';
import type { ViewSlot } from './state.js';
import { Viewer } from './viewer.js';

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const DEFAULT_CATEGORY: Category = {
  name: 'valve',
  keypoints: [
    { name: 'hub', ambiguous: false },
    { name: 'spoke', ambiguous: true },
  ],
};

class App {
  api: LabelServiceClient | null = null;
  controller: LabelController | null = null;
  viewers: Record<ViewSlot, Viewer>;
  inspectViewer: Viewer;
  inspectFrame = 0;
  lastClickedView: ViewSlot = 'a';
  category: Category = DEFAULT_CATEGORY;

  constructor() {
    this.viewers = {
      a: new Viewer(el<HTMLCanvasElement>('view-a')),
      b: new Viewer(el<HTMLCanvasElement>('view-b')),
    };
    this.inspectViewer = new Viewer(el<HTMLCanvasElement>('view-inspect'));
    this.viewers.a.onImageClick = (p) => this.handleClick('a', p);
    this.viewers.b.onImageClick = (p) => this.handleClick('b', p);
    el<HTMLButtonElement>('connect').addEventListener('click', () => this.run(this.connect()));
    el<HTMLButtonElement>('open').addEventListener('click', () => this.run(this.openSequence()));
    el<HTMLButtonElement>('submit').addEventListener('click', () => this.run(this.submit()));
    el<HTMLButtonElement>('commit').addEventListener('click', () => this.run(this.commit()));
    el<HTMLButtonElement>('swap-a').addEventListener('click', () => this.run(this.swap('a')));
    el<HTMLButtonElement>('swap-b').addEventListener('click', () => this.run(this.swap('b')));
    el<HTMLButtonElement>('undo').addEventListener('click', () => this.undo());
    el<HTMLButtonElement>('next-type').addEventListener('click', () => this.nextType());
    el<HTMLInputElement>('category-json').value = JSON.stringify(DEFAULT_CATEGORY);
    window.addEventListener('keydown', (e) => this.handleKey(e));
  }

  status(text: string, isError = false): void {
    const bar = el<HTMLDivElement>('status');
    bar.textContent = text;
    bar.className = isError ? 'status error' : 'status';
  }

  private run(task: Promise<void>): void {
    task.catch((err) => {
      this.status(err instanceof ServiceError ? err.message : String(err), true);
    });
  }

  async connect(): Promise<void> {
    const base = el<HTMLInputElement>('base-url').value.replace(/\/$/, '');
    this.api = new LabelServiceClient(base);
    const version = await this.api.version();
    const sequences = await this.api.sequences();
    const picker = el<HTMLSelectElement>('sequence');
    picker.innerHTML = '';
    for (const info of sequences.sequences) {
      const option = document.createElement('option');
      option.value = info.sequence_id;
      option.textContent = `${info.sequence_id} (${info.frames} frames, ${info.labeled_objects} labeled)`;
      picker.appendChild(option);
    }
    this.status(`connected, protocol v${version.protocol}, ${sequences.sequences.length} sequences`);
  }

  async openSequence(): Promise<void> {
    if (!this.api) throw new Error('connect first');
    try {
      this.category = JSON.parse(el<HTMLInputElement>('category-json').value) as Category;
    } catch {
      throw new Error('category JSON is invalid');
    }
    this.controller = new LabelController(this.api, this.category);
    const session = await this.controller.open(el<HTMLSelectElement>('sequence').value);
    this.loadView('a');
    this.loadView('b');
    this.inspectFrame = session.frame_a.index;
    await this.refreshInspect();
    this.renderPanels();
    this.status(
      `session open on ${session.sequence_id}: frames ${session.frame_a.index} / ` +
        `${session.frame_b.index}, pair quality ${session.pair_quality.toFixed(3)}`,
    );
  }

  loadView(view: ViewSlot): void {
    if (!this.controller) return;
    const viewer = this.viewers[view];
    viewer.setImage(this.controller.imageUrl(view));
    el<HTMLSpanElement>(`frame-${view}`).textContent = String(this.controller.frameIndex(view));
  }

  handleClick(view: ViewSlot, imagePoint: { x: number; y: number }): void {
    if (!this.controller) return;
    this.lastClickedView = view;
    const before = this.controller.state.activeType;
    if (!this.controller.clickAt(view, imagePoint)) {
      this.status(
        `type '${this.controller.state.typeName(before)}' already has its keypoint; ` +
          `press n for the next type`,
        true,
      );
      return;
    }
    this.renderPanels();
  }

  undo(): void {
    if (!this.controller) return;
    this.controller.undo(this.lastClickedView);
    this.renderPanels();
  }

  nextType(): void {
    if (!this.controller) return;
    this.controller.state.nextKeypoint();
    this.renderPanels();
  }

  async submit(): Promise<void> {
    if (!this.controller) return;
    if (!this.controller.canSubmit()) {
      this.status('every keypoint needs a click in both views before submitting', true);
      return;
    }
    const result = await this.controller.submit();
    const worst = Math.max(...result.residuals_a, ...result.residuals_b);
    this.renderPanels();
    await this.refreshInspect();
    this.status(
      `triangulated ${result.points_3d.length} keypoints, worst residual ` +
        `${formatResidual(worst)}${residualLevel(worst) === 'warn' ? ' (check placement!)' : ''}`,
    );
  }

  async commit(): Promise<void> {
    if (!this.controller) return;
    const count = await this.controller.commit();
    this.renderPanels();
    await this.refreshInspect();
    this.status(`committed; sequence now has ${count} labeled object(s)`);
  }

  async swap(view: ViewSlot): Promise<void> {
    if (!this.controller) return;
    const payload = await this.controller.swap(view);
    this.loadView(view);
    this.renderPanels();
    this.status(
      `view ${view.toUpperCase()} swapped to frame ${this.controller.frameIndex(view)}` +
        (payload.wrapped ? ' (cycled through all frames, starting over)' : ''),
    );
  }

  async cycleInspect(step: number): Promise<void> {
    if (!this.controller?.session) return;
    const count = this.controller.session.frame_count;
    this.inspectFrame = (this.inspectFrame + step + count) % count;
    await this.refreshInspect();
  }

  async refreshInspect(): Promise<void> {
    if (!this.controller) return;
    const overlay = await this.controller.overlay(this.inspectFrame);
    this.inspectViewer.overlays = overlay.objects;
    this.inspectViewer.setImage(
      this.api!.frameImageUrl(this.controller.session!.session_id, this.inspectFrame),
    );
    el<HTMLSpanElement>('frame-inspect').textContent = String(this.inspectFrame);
  }

  renderPanels(): void {
    if (!this.controller) return;
    const state = this.controller.state;
    const result = this.controller.lastResult;
    for (const view of ['a', 'b'] as ViewSlot[]) {
      const viewer = this.viewers[view];
      viewer.clicks = state.slots
        .filter((slot) => slot[view] !== null)
        .map((slot, i) => ({
          point: slot[view]!,
          label: state.typeName(slot.type),
          residual: result
            ? (view === 'a' ? result.residuals_a : result.residuals_b)[i]
            : undefined,
        }));
      viewer.render();
    }
    el<HTMLSpanElement>('active-type').textContent = state.typeName(state.activeType);
    el<HTMLSpanElement>('click-counts').textContent =
      `A: ${state.clickCount('a')}  B: ${state.clickCount('b')}`;
    el<HTMLButtonElement>('submit').disabled = !this.controller.canSubmit();
    el<HTMLButtonElement>('commit').disabled = result === null;
  }

  handleKey(event: KeyboardEvent): void {
    if (event.target instanceof HTMLInputElement) return;
    switch (event.key) {
      case 'n':
        this.nextType();
        break;
      case 'u':
        this.undo();
        break;
      case 'q':
        this.run(this.swap('a'));
        break;
      case 'w':
        this.run(this.swap('b'));
        break;
      case '[':
        this.run(this.cycleInspect(-1));
        break;
      case ']':
        this.run(this.cycleInspect(1));
        break;
      case 'Enter':
        this.run(this.submit());
        break;
      case 'c':
        this.run(this.commit());
        break;
      case '0':
        this.viewers.a.resetView();
        this.viewers.b.resetView();
        this.inspectViewer.resetView();
        break;
      default:
        return;
    }
    event.preventDefault();
  }
}

new App();
