// Minimal JSON-schema checker covering the subset the shared annotation
// schema uses. Kept dependency-free so the console and its tests validate
// payloads against the very same file the backend loads.

export interface SchemaNode {
  type?: string;
  required?: string[];
  properties?: Record<string, SchemaNode>;
  additionalProperties?: boolean;
  items?: SchemaNode;
  minItems?: number;
  minimum?: number;
  minLength?: number;
  [key: string]: unknown;
}

function typeOf(value: unknown): string {
  if (value === null) return "null";
  if (Array.isArray(value)) return "array";
  return typeof value;
}

function checkType(value: unknown, expected: string, path: string, errors: string[]) {
  const actual = typeOf(value);
  if (expected === "number") {
    if (actual !== "number" || Number.isNaN(value)) {
      errors.push(`${path}: expected number, got ${actual}`);
    }
    return;
  }
  if (expected === "integer") {
    if (actual !== "number" || !Number.isInteger(value)) {
      errors.push(`${path}: expected integer, got ${JSON.stringify(value)}`);
    }
    return;
  }
  if (actual !== expected) {
    errors.push(`${path}: expected ${expected}, got ${actual}`);
  }
}

function walk(value: unknown, node: SchemaNode, path: string, errors: string[]) {
  if (node.type !== undefined) {
    checkType(value, node.type, path, errors);
    if (errors.length && errors[errors.length - 1].startsWith(`${path}:`)) {
      return; // type mismatch: deeper checks would be noise
    }
  }
  if (node.type === "object" && typeOf(value) === "object") {
    const obj = value as Record<string, unknown>;
    for (const key of node.required ?? []) {
      if (!(key in obj)) errors.push(`${path}: missing required key "${key}"`);
    }
    const props = node.properties ?? {};
    for (const [key, sub] of Object.entries(obj)) {
      if (key in props) {
        walk(sub, props[key], `${path}.${key}`, errors);
      } else if (node.additionalProperties === false) {
        errors.push(`${path}: unexpected key "${key}"`);
      }
    }
  }
  if (node.type === "array" && Array.isArray(value)) {
    if (node.minItems !== undefined && value.length < node.minItems) {
      errors.push(`${path}: needs at least ${node.minItems} items`);
    }
    if (node.items) {
      value.forEach((item, i) => walk(item, node.items as SchemaNode, `${path}[${i}]`, errors));
    }
  }
  if (typeof value === "number") {
    if (node.minimum !== undefined && value < node.minimum) {
      errors.push(`${path}: ${value} below minimum ${node.minimum}`);
    }
  }
  if (typeof value === "string" && node.minLength !== undefined) {
    if (value.length < node.minLength) {
      errors.push(`${path}: shorter than minLength ${node.minLength}`);
    }
  }
}

export function validate(value: unknown, schema: SchemaNode): string[] {
  const errors: string[] = [];
  walk(value, schema, "$", errors);
  return errors;
}
