export interface KeyValueStore {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
}

const STORAGE_KEY = "cinefaces.reviewer_id";

/**
 * Anonymous reviewer id, generated client-side and persisted so one
 * browser keeps one identity across sessions (no accounts).
 */
export function getReviewerId(store: KeyValueStore, randomHex: () => string = cryptoHex): string {
  const existing = store.getItem(STORAGE_KEY);
  if (existing) return existing;
  const fresh = `r-${randomHex()}`;
  store.setItem(STORAGE_KEY, fresh);
  return fresh;
}

function cryptoHex(): string {
  const bytes = new Uint8Array(8);
  crypto.getRandomValues(bytes);
  return Array.from(bytes, (b) => b.toString(16).padStart(2, "0")).join("");
}
