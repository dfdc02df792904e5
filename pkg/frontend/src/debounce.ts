/** Trailing-edge debounce: the wrapped function runs once, with the most
 *  recent arguments, after `ms` of quiet. */
export interface Debounced<A extends unknown[]> {
  (...args: A): void;
  /** Run a pending call now instead of waiting out the timer. */
  flush(): void;
  cancel(): void;
  pending(): boolean;
}

export function debounce<A extends unknown[]>(
  fn: (...args: A) => void,
  ms: number,
): Debounced<A> {
  let timer: ReturnType<typeof setTimeout> | null = null;
  let latest: A | null = null;

  const fire = () => {
    timer = null;
    if (latest !== null) {
      const args = latest;
      latest = null;
      fn(...args);
    }
  };

  const wrapped = ((...args: A) => {
    latest = args;
    if (timer !== null) clearTimeout(timer);
    timer = setTimeout(fire, ms);
  }) as Debounced<A>;

  wrapped.flush = () => {
    if (timer !== null) {
      clearTimeout(timer);
      fire();
    }
  };
  wrapped.cancel = () => {
    if (timer !== null) clearTimeout(timer);
    timer = null;
    latest = null;
  };
  wrapped.pending = () => timer !== null;
  return wrapped;
}
