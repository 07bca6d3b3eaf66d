/** Workbench state machine.
 *
 * Invariants: the queue renders exactly in service order (no client-side
 * re-scoring or re-sorting); a decision is shown as committed only after the
 * service acknowledged it (no optimistic flips); a conflict surfaces an error
 * and refreshes the item without mutating anything locally.
 */
import {
  ApiClient,
  ConflictError,
  DecisionAction,
  ItemDetail,
  ItemSummary,
  ServiceUnreachable,
} from "./api.js";

export const RECOMPUTE_EVERY = 25;

export interface WorkbenchState {
  items: ItemSummary[];
  total: number;
  offset: number;
  statusFilter: string;
  selected: ItemDetail | null;
  awaitingAck: boolean;
  decidedCount: number;
  suggestRecompute: boolean;
  error: string | null;
  retry: boolean;
  done: boolean;
}

export class Workbench {
  state: WorkbenchState = {
    items: [],
    total: 0,
    offset: 0,
    statusFilter: "pending",
    selected: null,
    awaitingAck: false,
    decidedCount: 0,
    suggestRecompute: false,
    error: null,
    retry: false,
    done: false,
  };

  constructor(private api: ApiClient, private pageSize: number = 50) {}

  /** Load a queue page; item order is the service's order, verbatim. */
  async loadQueue(offset = 0, status = this.state.statusFilter): Promise<void> {
    try {
      const page = await this.api.getQueue(this.pageSize, offset, status);
      this.state.items = page.items;
      this.state.total = page.total;
      this.state.offset = page.offset;
      this.state.statusFilter = status;
      this.state.error = null;
      this.state.retry = false;
      this.state.done = status === "pending" && page.total === 0;
    } catch (err) {
      if (err instanceof ServiceUnreachable) {
        this.state.error = "service unreachable";
        this.state.retry = true;
        return;
      }
      throw err;
    }
  }

  async select(id: string): Promise<void> {
    this.state.selected = await this.api.getItem(id);
  }

  /** Move selection among the listed items: delta +1 (j) or -1 (k). */
  async navigate(delta: number): Promise<void> {
    if (!this.state.items.length) return;
    const current = this.state.selected?.id;
    const idx = this.state.items.findIndex((it) => it.id === current);
    const next = Math.min(
      this.state.items.length - 1,
      Math.max(0, (idx === -1 ? 0 : idx + delta))
    );
    await this.select(this.state.items[next].id);
  }

  /** Post a decision. Local state mutates only after service acknowledgement;
   * conflicts refresh the item and surface the error. */
  async decide(action: DecisionAction, label?: number | string): Promise<boolean> {
    const item = this.state.selected;
    if (!item || this.state.awaitingAck) return false;
    if (item.status !== "pending") {
      this.state.error = `item ${item.id} is not pending`;
      return false;
    }
    this.state.awaitingAck = true;
    try {
      const acked = await this.api.postDecision(item.id, action, label);
      // committed: reflect the acknowledged state, then advance
      this.state.items = this.state.items.filter((it) => it.id !== item.id);
      this.state.total -= 1;
      this.state.decidedCount += 1;
      this.state.suggestRecompute =
        this.state.decidedCount % RECOMPUTE_EVERY === 0;
      this.state.selected = { ...item, ...acked };
      this.state.error = null;
      await this.advance();
      return true;
    } catch (err) {
      if (err instanceof ConflictError) {
        this.state.error = `conflict: ${err.message}`;
        const fresh = await this.api.getItem(item.id);
        this.state.selected = fresh;
        this.state.items = this.state.items.filter(
          (it) => it.id !== item.id || fresh.status === "pending"
        );
        return false;
      }
      if (err instanceof ServiceUnreachable) {
        this.state.error = "service unreachable";
        this.state.retry = true;
        return false;
      }
      throw err;
    } finally {
      this.state.awaitingAck = false;
    }
  }

  /** Focus the next pending item, refreshing the page when it runs dry. */
  async advance(): Promise<void> {
    if (!this.state.items.length) {
      await this.loadQueue(0);
    }
    if (this.state.items.length) {
      await this.select(this.state.items[0].id);
    } else {
      this.state.selected = null;
      this.state.done = this.state.statusFilter === "pending";
    }
  }

  async recomputeNow(): Promise<number> {
    const out = await this.api.recompute();
    this.state.suggestRecompute = false;
    await this.loadQueue(0);
    return out.changed;
  }
}
