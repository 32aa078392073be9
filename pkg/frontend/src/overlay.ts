/**
 * Canvas rendering: the frame bitmap, one rectangle per annotation with its
 * label and score, and an in-progress drag rectangle. Overlays come solely
 * from the latest server payload.
 */

import type { Annotation } from "./protocol.js";
import { bboxToCanvas, type FrameSize } from "./coords.js";

export interface DragRect {
  x0: number;
  y0: number;
  x1: number;
  y1: number;
}

const BOX_COLORS = ["#50c878", "#5aa0ff", "#faa03c", "#e65ac8", "#78dcdc"];

export function colorForLabel(label: string): string {
  let hash = 0;
  for (let i = 0; i < label.length; i++) {
    hash = (hash * 31 + label.charCodeAt(i)) | 0;
  }
  return BOX_COLORS[Math.abs(hash) % BOX_COLORS.length]!;
}

export function drawFrame(
  ctx: CanvasRenderingContext2D,
  image: CanvasImageSource | null,
  frame: FrameSize,
  annotations: Annotation[],
  drag: DragRect | null,
): void {
  const { width, height } = ctx.canvas;
  ctx.clearRect(0, 0, width, height);
  if (image) {
    ctx.imageSmoothingEnabled = false;
    ctx.drawImage(image, 0, 0, width, height);
  } else {
    ctx.fillStyle = "#222";
    ctx.fillRect(0, 0, width, height);
  }
  ctx.font = "12px monospace";
  ctx.lineWidth = 2;
  for (const annotation of annotations) {
    const rect = bboxToCanvas(annotation.bbox, width, height, frame);
    const color = colorForLabel(annotation.label);
    ctx.strokeStyle = color;
    ctx.strokeRect(rect.x, rect.y, rect.w, rect.h);
    const text = `${annotation.label} ${annotation.score.toFixed(2)}`;
    const textY = rect.y > 14 ? rect.y - 4 : rect.y + rect.h + 12;
    ctx.fillStyle = color;
    ctx.fillText(text, rect.x + 2, textY);
  }
  if (drag) {
    ctx.strokeStyle = "#ffffff";
    ctx.setLineDash([4, 3]);
    ctx.strokeRect(
      Math.min(drag.x0, drag.x1),
      Math.min(drag.y0, drag.y1),
      Math.abs(drag.x1 - drag.x0),
      Math.abs(drag.y1 - drag.y0),
    );
    ctx.setLineDash([]);
  }
}
