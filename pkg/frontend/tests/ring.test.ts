import { describe, expect, it } from "vitest";
import { Ring } from "../src/ring.js";

describe("Ring", () => {
  it("rejects non-positive or fractional capacities", () => {
    expect(() => new Ring(0)).toThrow(RangeError);
    expect(() => new Ring(-3)).toThrow(RangeError);
    expect(() => new Ring(2.5)).toThrow(RangeError);
  });

  it("keeps insertion order below capacity", () => {
    const r = new Ring<number>(4);
    r.push(1);
    r.push(2);
    r.push(3);
    expect(r.length).toBe(3);
    expect(r.at(0)).toBe(1);
    expect(r.last()).toBe(3);
    expect(r.toArray()).toEqual([1, 2, 3]);
  });

  it("evicts the oldest entry once full", () => {
    const r = new Ring<number>(3);
    for (const v of [1, 2, 3, 4, 5]) r.push(v);
    expect(r.length).toBe(3);
    expect(r.toArray()).toEqual([3, 4, 5]);
    expect(r.at(0)).toBe(3);
    expect(r.at(3)).toBeUndefined();
    expect(r.at(-1)).toBeUndefined();
  });

  it("stays bounded through a 10k push flood", () => {
    const r = new Ring<number>(600);
    for (let i = 0; i < 10_000; i += 1) r.push(i);
    expect(r.length).toBe(600);
    expect(r.at(0)).toBe(9_400);
    expect(r.last()).toBe(9_999);
    expect(r.toArray()).toHaveLength(600);
  });

  it("clear resets to empty and stays usable", () => {
    const r = new Ring<number>(2);
    r.push(1);
    r.push(2);
    r.push(3);
    r.clear();
    expect(r.length).toBe(0);
    expect(r.last()).toBeUndefined();
    r.push(7);
    expect(r.toArray()).toEqual([7]);
  });
});
