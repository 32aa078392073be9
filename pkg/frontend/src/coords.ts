/**
 * Canvas <-> frame pixel mapping. The canvas displays the frame scaled by
 * (canvasWidth / frameWidth, canvasHeight / frameHeight); clicks arrive in
 * canvas pixels and must land on the frame pixel under the cursor. Exact for
 * integer scale factors, within one pixel otherwise.
 */

export interface FrameSize {
  width: number;
  height: number;
}

export function canvasToFrame(
  canvasX: number,
  canvasY: number,
  canvasWidth: number,
  canvasHeight: number,
  frame: FrameSize,
): { x: number; y: number } {
  if (canvasWidth <= 0 || canvasHeight <= 0) {
    throw new Error("canvas must have positive size");
  }
  const scaleX = canvasWidth / frame.width;
  const scaleY = canvasHeight / frame.height;
  const x = Math.min(frame.width - 1, Math.max(0, Math.floor(canvasX / scaleX)));
  const y = Math.min(frame.height - 1, Math.max(0, Math.floor(canvasY / scaleY)));
  return { x, y };
}

export function frameToCanvas(
  frameX: number,
  frameY: number,
  canvasWidth: number,
  canvasHeight: number,
  frame: FrameSize,
): { x: number; y: number } {
  return {
    x: (frameX * canvasWidth) / frame.width,
    y: (frameY * canvasHeight) / frame.height,
  };
}

/** Canvas-space rectangle for a frame-space bbox [x, y, w, h]. */
export function bboxToCanvas(
  bbox: [number, number, number, number],
  canvasWidth: number,
  canvasHeight: number,
  frame: FrameSize,
): { x: number; y: number; w: number; h: number } {
  const scaleX = canvasWidth / frame.width;
  const scaleY = canvasHeight / frame.height;
  return {
    x: bbox[0] * scaleX,
    y: bbox[1] * scaleY,
    w: bbox[2] * scaleX,
    h: bbox[3] * scaleY,
  };
}
