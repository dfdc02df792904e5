/** Fixed-capacity ring buffer: once full, each push evicts the oldest
 *  entry, so memory stays bounded no matter how long a session runs. */
export class Ring<T> {
  private buf: T[];
  private head = 0; // index of the oldest retained entry
  private count = 0;

  constructor(readonly capacity: number) {
    if (!Number.isInteger(capacity) || capacity <= 0) {
      throw new RangeError("ring capacity must be a positive integer");
    }
    this.buf = new Array<T>(capacity);
  }

  get length(): number {
    return this.count;
  }

  push(item: T): void {
    if (this.count < this.capacity) {
      this.buf[(this.head + this.count) % this.capacity] = item;
      this.count += 1;
    } else {
      this.buf[this.head] = item;
      this.head = (this.head + 1) % this.capacity;
    }
  }

  /** i = 0 is the oldest retained entry. */
  at(i: number): T | undefined {
    if (i < 0 || i >= this.count) return undefined;
    return this.buf[(this.head + i) % this.capacity];
  }

  last(): T | undefined {
    return this.at(this.count - 1);
  }

  toArray(): T[] {
    const out = new Array<T>(this.count);
    for (let i = 0; i < this.count; i += 1) out[i] = this.at(i) as T;
    return out;
  }

  clear(): void {
    this.buf = new Array<T>(this.capacity);
    this.head = 0;
    this.count = 0;
  }
}
