/** Pure geometry for the preview pane's feature overlay. */

export interface OverlayDot {
  left: number;
  top: number;
}

/** Map feature coordinates in stream pixels onto a preview displayed at
 *  displayW x displayH CSS pixels (dot centered on the pixel). */
export function overlayDots(
  features: [number, number][],
  streamW: number,
  streamH: number,
  displayW: number,
  displayH: number,
): OverlayDot[] {
  if (streamW <= 0 || streamH <= 0) return [];
  return features.map(([x, y]) => ({
    left: ((x + 0.5) / streamW) * displayW,
    top: ((y + 0.5) / streamH) * displayH,
  }));
}
