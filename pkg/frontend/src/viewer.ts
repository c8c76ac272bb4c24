/**
 * Canvas rendering for one view: frame image, click markers and
 * backprojection overlays under a zoom/pan transform.
 */

import type { OverlayObject } from './api.js';
import {
  type Point,
  type ViewTransform,
  IDENTITY,
  canvasToImage,
  formatResidual,
  imageToCanvas,
  pan,
  residualLevel,
  zoomAround,
} from './overlay.js';

export interface ClickMarker {
  point: Point;
  label: string;
  residual?: number;
}

export interface ViewerToggles {
  clicks: boolean;
  backprojections: boolean;
  residuals: boolean;
}

const CLICK_COLOR = '#ffd34d';
const CENTER_COLOR = '#7bd88f';
const BACKPROJECTION_COLOR = '#6fb7ff';
const PENDING_COLOR = '#ff9d5c';
const WARN_COLOR = '#ff5c5c';

export class Viewer {
  readonly canvas: HTMLCanvasElement;
  transform: ViewTransform = { ...IDENTITY };
  image: HTMLImageElement | null = null;
  clicks: ClickMarker[] = [];
  overlays: OverlayObject[] = [];
  toggles: ViewerToggles = { clicks: true, backprojections: true, residuals: true };
  onImageClick: ((imagePoint: Point) => void) | null = null;

  private dragging = false;
  private lastDrag: Point = { x: 0, y: 0 };
  private moved = 0;

  constructor(canvas: HTMLCanvasElement) {
    this.canvas = canvas;
    canvas.addEventListener('wheel', (e) => {
      e.preventDefault();
      const rect = canvas.getBoundingClientRect();
      const at = { x: e.clientX - rect.left, y: e.clientY - rect.top };
      this.transform = zoomAround(this.transform, at, e.deltaY < 0 ? 1.2 : 1 / 1.2);
      this.render();
    });
    canvas.addEventListener('mousedown', (e) => {
      this.dragging = true;
      this.moved = 0;
      this.lastDrag = { x: e.clientX, y: e.clientY };
    });
    window.addEventListener('mousemove', (e) => {
      if (!this.dragging) return;
      const dx = e.clientX - this.lastDrag.x;
      const dy = e.clientY - this.lastDrag.y;
      this.moved += Math.abs(dx) + Math.abs(dy);
      this.lastDrag = { x: e.clientX, y: e.clientY };
      this.transform = pan(this.transform, dx, dy);
      this.render();
    });
    window.addEventListener('mouseup', (e) => {
      if (!this.dragging) return;
      this.dragging = false;
      // a press without movement is a labeling click
      if (this.moved < 3 && this.onImageClick && e.target === canvas) {
        const rect = canvas.getBoundingClientRect();
        const at = { x: e.clientX - rect.left, y: e.clientY - rect.top };
        this.onImageClick(canvasToImage(this.transform, at));
      }
    });
  }

  setImage(url: string, onload?: () => void): void {
    const img = new Image();
    img.crossOrigin = 'anonymous';
    img.onload = () => {
      this.image = img;
      this.fit();
      this.render();
      onload?.();
    };
    img.src = url;
  }

  /** Fit the image into the canvas at integer-friendly zoom. */
  fit(): void {
    if (!this.image) return;
    const zoom = Math.min(
      this.canvas.width / this.image.width,
      this.canvas.height / this.image.height,
    );
    this.transform = {
      zoom,
      panX: (this.canvas.width - this.image.width * zoom) / 2,
      panY: (this.canvas.height - this.image.height * zoom) / 2,
    };
  }

  resetView(): void {
    this.fit();
    this.render();
  }

  render(): void {
    const ctx = this.canvas.getContext('2d');
    if (!ctx) return;
    ctx.fillStyle = '#17171a';
    ctx.fillRect(0, 0, this.canvas.width, this.canvas.height);
    if (this.image) {
      ctx.save();
      ctx.imageSmoothingEnabled = this.transform.zoom < 4;
      ctx.translate(this.transform.panX, this.transform.panY);
      ctx.scale(this.transform.zoom, this.transform.zoom);
      ctx.drawImage(this.image, 0, 0);
      ctx.restore();
    }
    if (this.toggles.backprojections) {
      for (const object of this.overlays) {
        this.drawOverlayObject(ctx, object);
      }
    }
    if (this.toggles.clicks) {
      for (const marker of this.clicks) {
        this.drawClick(ctx, marker);
      }
    }
  }

  private drawClick(ctx: CanvasRenderingContext2D, marker: ClickMarker): void {
    const p = imageToCanvas(this.transform, marker.point);
    ctx.strokeStyle = CLICK_COLOR;
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    ctx.moveTo(p.x - 7, p.y);
    ctx.lineTo(p.x + 7, p.y);
    ctx.moveTo(p.x, p.y - 7);
    ctx.lineTo(p.x, p.y + 7);
    ctx.stroke();
    ctx.fillStyle = CLICK_COLOR;
    ctx.font = '12px sans-serif';
    let text = marker.label;
    if (this.toggles.residuals && marker.residual !== undefined) {
      text += ` ${formatResidual(marker.residual)}`;
      if (residualLevel(marker.residual) === 'warn') {
        ctx.fillStyle = WARN_COLOR;
      }
    }
    ctx.fillText(text, p.x + 9, p.y - 6);
  }

  private drawOverlayObject(ctx: CanvasRenderingContext2D, object: OverlayObject): void {
    const color = object.pending ? PENDING_COLOR : BACKPROJECTION_COLOR;
    for (const kp of object.keypoints) {
      if (!kp.position) continue;
      const p = imageToCanvas(this.transform, { x: kp.position[0], y: kp.position[1] });
      ctx.strokeStyle = color;
      ctx.lineWidth = 1.5;
      ctx.beginPath();
      ctx.arc(p.x, p.y, 6, 0, 2 * Math.PI);
      ctx.stroke();
      ctx.fillStyle = color;
      ctx.font = '11px sans-serif';
      ctx.fillText(kp.type_name, p.x + 8, p.y + 4);
    }
    if (object.center.position) {
      const p = imageToCanvas(this.transform, {
        x: object.center.position[0],
        y: object.center.position[1],
      });
      ctx.strokeStyle = CENTER_COLOR;
      ctx.beginPath();
      ctx.arc(p.x, p.y, 4, 0, 2 * Math.PI);
      ctx.moveTo(p.x - 8, p.y);
      ctx.lineTo(p.x + 8, p.y);
      ctx.stroke();
    }
  }
}
