// Request discipline for the interactive loop: trailing-edge debounce for
// slider drags, and a latest-wins guard so a stale response never overwrites
// a newer probe.

export function debounce<A extends unknown[]>(
  fn: (...args: A) => void,
  ms: number
): (...args: A) => void {
  let timer: ReturnType<typeof setTimeout> | null = null;
  return (...args: A) => {
    if (timer !== null) clearTimeout(timer);
    timer = setTimeout(() => {
      timer = null;
      fn(...args);
    }, ms);
  };
}

export class LatestWins {
  private seq = 0;

  // resolves to null when a newer call superseded this one
  async run<T>(work: () => Promise<T>): Promise<T | null> {
    const ticket = ++this.seq;
    const result = await work();
    return ticket === this.seq ? result : null;
  }
}
