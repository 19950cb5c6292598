/** Interval poller that never overlaps in-flight requests. */

export interface Poller {
  start(): void;
  stop(): void;
  readonly running: boolean;
}

export function createPoller(tick: () => Promise<void>, intervalMs: number): Poller {
  let timer: ReturnType<typeof setInterval> | null = null;
  let inFlight = false;

  const fire = async () => {
    if (inFlight) return;
    inFlight = true;
    try {
      await tick();
    } finally {
      inFlight = false;
    }
  };

  return {
    start() {
      if (timer === null) {
        timer = setInterval(() => void fire(), intervalMs);
        void fire();
      }
    },
    stop() {
      if (timer !== null) {
        clearInterval(timer);
        timer = null;
      }
    },
    get running() {
      return timer !== null;
    },
  };
}
