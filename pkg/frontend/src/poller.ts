// Fixed-interval poller; a failed tick marks the data stale until the next
// success (simple and robust for a single-operator tool).

export interface Poller {
  stop(): void;
  tick(): Promise<void>;
}

export function startPolling(
  fn: () => Promise<void>,
  onError: (err: unknown) => void,
  intervalMs: number,
  scheduler: { setInterval: typeof setInterval; clearInterval: typeof clearInterval } = globalThis,
): Poller {
  const tick = async () => {
    try {
      await fn();
    } catch (err) {
      onError(err);
    }
  };
  void tick();
  const handle = scheduler.setInterval(tick, intervalMs);
  return {
    stop: () => scheduler.clearInterval(handle),
    tick,
  };
}
