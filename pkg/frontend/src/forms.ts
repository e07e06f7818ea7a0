/** Task form model and client-side validation.
 *
 * Points are plain "x,y" strings so they can be typed by hand or filled by
 * clicking the map. Validation failures never produce a request.
 */

import type { TaskRequest } from "./api.js";

export type TaskKindChoice = "delivery" | "target_search";

export interface FormState {
  kind: TaskKindChoice;
  pickup: string;
  dropoff: string;
  marker: string;
  /** "x,y; x,y; ..." — optional, defaults to the scenario's candidates. */
  locations: string;
  reply_to: string;
}

export function emptyForm(kind: TaskKindChoice = "delivery"): FormState {
  return { kind, pickup: "", dropoff: "", marker: "", locations: "", reply_to: "" };
}

export function parsePoint(text: string): [number, number] | null {
  const parts = text.split(",");
  if (parts.length !== 2) return null;
  const x = Number(parts[0].trim());
  const y = Number(parts[1].trim());
  if (!Number.isFinite(x) || !Number.isFinite(y)) return null;
  return [x, y];
}

export interface ValidationResult {
  errors: Partial<Record<keyof FormState, string>>;
  request?: TaskRequest;
}

export function validateForm(f: FormState): ValidationResult {
  const errors: ValidationResult["errors"] = {};
  let request: TaskRequest | undefined;

  if (f.kind === "delivery") {
    const pickup = requirePoint(f.pickup, "pickup", errors);
    const dropoff = requirePoint(f.dropoff, "dropoff", errors);
    if (pickup && dropoff) {
      request = { kind: "delivery", params: { pickup, dropoff } };
    }
  } else {
    const marker = f.marker.trim();
    let markerId: number | null = null;
    if (!marker) errors.marker = "marker id is required";
    else if (!/^-?\d+$/.test(marker)) errors.marker = "marker id must be an integer";
    else markerId = parseInt(marker, 10);

    let locations: Array<[number, number]> | undefined;
    const locText = f.locations.trim();
    if (locText) {
      locations = [];
      for (const piece of locText.split(";")) {
        if (!piece.trim()) continue;
        const pt = parsePoint(piece);
        if (!pt) {
          errors.locations = `"${piece.trim()}" is not an x,y point`;
          locations = undefined;
          break;
        }
        locations.push(pt);
      }
    }
    if (markerId !== null && !errors.locations) {
      const params: Record<string, unknown> = { marker: markerId };
      if (locations && locations.length) params["locations"] = locations;
      request = { kind: "target_search", params };
    }
  }

  if (request && f.reply_to.trim()) request.reply_to = f.reply_to.trim();
  if (Object.keys(errors).length > 0) return { errors };
  return { errors, request };
}

function requirePoint(
  text: string,
  field: "pickup" | "dropoff",
  errors: ValidationResult["errors"],
): [number, number] | null {
  if (!text.trim()) {
    errors[field] = `${field} is required`;
    return null;
  }
  const pt = parsePoint(text);
  if (!pt) {
    errors[field] = `${field} must be "x,y"`;
    return null;
  }
  return pt;
}

/** Which point field a map click should fill, in form order. */
export function clickTarget(f: FormState): "pickup" | "dropoff" | "locations" | null {
  if (f.kind === "delivery") {
    if (!f.pickup.trim()) return "pickup";
    if (!f.dropoff.trim()) return "dropoff";
    return "pickup"; // start over on further clicks
  }
  return "locations";
}

/** Apply a map click at world (x, y) to the form. */
export function applyMapClick(f: FormState, x: number, y: number): FormState {
  const pt = `${x.toFixed(2)},${y.toFixed(2)}`;
  const target = clickTarget(f);
  if (target === "pickup") {
    const restarting = f.pickup.trim() !== "" && f.dropoff.trim() !== "";
    return { ...f, pickup: pt, dropoff: restarting ? "" : f.dropoff };
  }
  if (target === "dropoff") return { ...f, dropoff: pt };
  if (target === "locations")
    return { ...f, locations: f.locations.trim() ? `${f.locations.trim()}; ${pt}` : pt };
  return f;
}
