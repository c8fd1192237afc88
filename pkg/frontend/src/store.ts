/** Last-good-value holder: a failed refresh keeps the previous data and
 * surfaces an inline error instead of blanking the view. */
export class LastGood<T extends { error?: string }> {
  private value: T | undefined;

  get current(): T | undefined {
    return this.value;
  }

  async refresh(load: () => Promise<T>): Promise<T | undefined> {
    try {
      const next = await load();
      delete next.error;
      this.value = next;
    } catch (err) {
      if (this.value !== undefined) {
        this.value = { ...this.value, error: String(err) };
      } else {
        this.value = undefined;
        throw err;
      }
    }
    return this.value;
  }
}
