import { describe, expect, it } from "vitest";

import { clientToImage, imageToClient } from "../src/coords.js";

const rectAt = (left: number, top: number, width: number, height: number) =>
  ({ left, top, width, height });

describe("clientToImage", () => {
  it("maps 1:1 when the element is displayed at native size", () => {
    const rect = rectAt(100, 50, 40, 30);
    expect(clientToImage(100, 50, rect, 40, 30)).toEqual({ x: 0, y: 0 });
    expect(clientToImage(117, 63, rect, 40, 30)).toEqual({ x: 17, y: 13 });
    expect(clientToImage(139.9, 79.9, rect, 40, 30)).toEqual({ x: 39, y: 29 });
  });

  it("is zoom independent: doubled display size maps pixel centers back", () => {
    const rect = rectAt(10, 10, 80, 60); // 40x30 image shown at 2x
    for (const [x, y] of [[0, 0], [17, 13], [39, 29]] as const) {
      const clientX = 10 + 2 * x + 1; // center of the magnified pixel
      const clientY = 10 + 2 * y + 1;
      expect(clientToImage(clientX, clientY, rect, 40, 30)).toEqual({ x, y });
    }
  });

  it("handles fractional zoom factors", () => {
    const rect = rectAt(0, 0, 100, 75); // 40x30 image at 2.5x
    const point = clientToImage(52, 33, rect, 40, 30);
    expect(point).toEqual({ x: Math.floor((52 / 100) * 40), y: Math.floor((33 / 75) * 30) });
  });

  it("returns null outside the element", () => {
    const rect = rectAt(10, 10, 40, 30);
    expect(clientToImage(9, 20, rect, 40, 30)).toBeNull();
    expect(clientToImage(50, 20, rect, 40, 30)).toBeNull();
    expect(clientToImage(20, 40.5, rect, 40, 30)).toBeNull();
  });

  it("returns null for degenerate rects", () => {
    expect(clientToImage(5, 5, rectAt(0, 0, 0, 30), 40, 30)).toBeNull();
  });

  it("round-trips through imageToClient at any scale", () => {
    for (const scale of [1, 2, 0.5, 3.7]) {
      const rect = rectAt(7, 11, 40 * scale, 30 * scale);
      for (const point of [{ x: 0, y: 0 }, { x: 21, y: 13 }, { x: 39, y: 29 }]) {
        const client = imageToClient(point, rect, 40, 30);
        expect(clientToImage(client.clientX, client.clientY, rect, 40, 30)).toEqual(point);
      }
    }
  });
});
