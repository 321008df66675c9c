/**
 * Line-JSON wire protocol between a certification host and a predictor worker.
 *
 * The worker writes one hello line on startup, then answers each predict
 * request with a prediction (or error) line carrying the same id. A bye
 * request or EOF ends the session.
 */

export type Point = [number, number];

export interface HelloMessage {
  type: "hello";
  t_obs: number;
  t_pred: number;
  k: number;
}

export interface PredictRequest {
  type: "predict";
  id: number;
  primary: Point[];
  neighbors: Point[][];
}

export interface ByeRequest {
  type: "bye";
}

export interface PredictionResponse {
  type: "prediction";
  id: number;
  modes: Point[][];
}

export interface ErrorResponse {
  type: "error";
  id: number | null;
  msg: string;
}

export type WorkerResponse = HelloMessage | PredictionResponse | ErrorResponse;

function isFinitePair(value: unknown): value is Point {
  return (
    Array.isArray(value) &&
    value.length === 2 &&
    typeof value[0] === "number" &&
    typeof value[1] === "number" &&
    Number.isFinite(value[0]) &&
    Number.isFinite(value[1])
  );
}

function isPointSequence(value: unknown, length?: number): value is Point[] {
  if (!Array.isArray(value)) return false;
  if (length !== undefined && value.length !== length) return false;
  return value.every(isFinitePair);
}

export function parsePredictRequest(
  value: unknown,
  tObs: number
): PredictRequest | string {
  if (typeof value !== "object" || value === null) {
    return "request must be a JSON object";
  }
  const obj = value as Record<string, unknown>;
  if (obj.type !== "predict") {
    return `unsupported request type ${JSON.stringify(obj.type)}`;
  }
  if (typeof obj.id !== "number" || !Number.isInteger(obj.id)) {
    return "request id must be an integer";
  }
  if (!isPointSequence(obj.primary, tObs)) {
    return `primary must be ${tObs} finite [x, y] pairs`;
  }
  const neighbors = obj.neighbors ?? [];
  if (!Array.isArray(neighbors) || !neighbors.every((n) => isPointSequence(n, tObs))) {
    return `every neighbor must be ${tObs} finite [x, y] pairs`;
  }
  return {
    type: "predict",
    id: obj.id,
    primary: obj.primary as Point[],
    neighbors: neighbors as Point[][],
  };
}

export function isBye(value: unknown): value is ByeRequest {
  return (
    typeof value === "object" &&
    value !== null &&
    (value as Record<string, unknown>).type === "bye"
  );
}
