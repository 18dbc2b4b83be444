/**
 * The viewer decoder must reproduce the shared conformance fixtures
 * bit-exactly: same integer samples, same float64 dequantized values.
 */

import { readFileSync, readdirSync } from "node:fs";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import { decodePlanes, dequantize, parsePayload, CodecError } from "../src/payload.js";

const FIXTURE_DIR = join(__dirname, "..", "..", "conformance");

interface Fixture {
  name: string;
  codec: number;
  bits: number;
  width: number;
  height: number;
  count: number;
  payload_b64: string;
  expected_samples: number[][];
  range_min?: number;
  range_max?: number;
  expected_values?: number[][];
}

const fixtures: Fixture[] = readdirSync(FIXTURE_DIR)
  .filter((f) => f.endsWith(".json"))
  .sort()
  .map((f) => JSON.parse(readFileSync(join(FIXTURE_DIR, f), "utf-8")));

describe("conformance fixtures", () => {
  it("found the shared fixture corpus", () => {
    expect(fixtures.length).toBeGreaterThanOrEqual(6);
  });

  for (const fixture of fixtures) {
    it(`decodes ${fixture.name} bit-exactly`, () => {
      const blob = Uint8Array.from(Buffer.from(fixture.payload_b64, "base64"));
      const { payload, end } = parsePayload(blob);
      expect(end).toBe(blob.length);
      expect(payload.codecId).toBe(fixture.codec);
      expect(payload.bits).toBe(fixture.bits);
      expect(payload.width).toBe(fixture.width);
      expect(payload.height).toBe(fixture.height);
      expect(payload.count).toBe(fixture.count);

      const planes = decodePlanes(payload);
      expect(planes.length).toBe(fixture.count);
      planes.forEach((plane, f) => {
        expect(Array.from(plane)).toEqual(fixture.expected_samples[f]);
      });

      if (fixture.expected_values) {
        planes.forEach((plane, f) => {
          const values = dequantize(plane, fixture.bits, fixture.range_min!, fixture.range_max!);
          // strict equality: both sides are IEEE float64 of the same formula
          expect(Array.from(values)).toEqual(fixture.expected_values![f]);
        });
      }
    });
  }

  it("rejects corrupted payloads via the checksum", () => {
    const fixture = fixtures.find((f) => f.codec === 1 && f.bits === 8)!;
    const blob = Uint8Array.from(Buffer.from(fixture.payload_b64, "base64"));
    blob[16] ^= 0x40;
    const { payload } = parsePayload(blob);
    expect(() => decodePlanes(payload)).toThrow(CodecError);
  });

  it("rejects truncated payloads", () => {
    const fixture = fixtures[0];
    const blob = Uint8Array.from(Buffer.from(fixture.payload_b64, "base64"));
    expect(() => parsePayload(blob.subarray(0, blob.length - 3))).toThrow(CodecError);
  });
});
