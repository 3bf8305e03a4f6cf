/**
 * State of the six-flag judgment form. Every submission must be explicit:
 * either at least one error flag is set, or the evaluator has actively
 * confirmed "no errors". A fresh form can never be submitted.
 */

import { CATEGORIES, type Category, type CategoryFlags, emptyFlags } from "./api.js";

export class FlagForm {
  flags: CategoryFlags = emptyFlags();
  noErrorsConfirmed = false;

  toggle(category: Category): void {
    this.flags[category] = !this.flags[category];
    if (this.flags[category]) {
      // an error flag contradicts the no-errors confirmation
      this.noErrorsConfirmed = false;
    }
  }

  confirmNoErrors(value: boolean): void {
    this.noErrorsConfirmed = value;
    if (value) {
      this.flags = emptyFlags();
    }
  }

  anyFlag(): boolean {
    return CATEGORIES.some((c) => this.flags[c]);
  }

  canSubmit(): boolean {
    return this.anyFlag() || this.noErrorsConfirmed;
  }

  reset(): void {
    this.flags = emptyFlags();
    this.noErrorsConfirmed = false;
  }

  snapshot(): CategoryFlags {
    return { ...this.flags };
  }
}
