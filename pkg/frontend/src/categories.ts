/** Display labels and on-demand help text for the six binary error flags. */

import type { Category } from "./api.js";

export const CATEGORY_LABELS: Record<Category, string> = {
  form: "Form error",
  content: "Content error",
  register: "Register error",
  repetitive: "Repetitive content",
  inappropriate: "Inappropriate content",
  factual: "Factual error",
};

export const CATEGORY_HELP: Record<Category, string> = {
  form:
    "The text can be understood, but it has at least one surface mistake " +
    "(spelling, punctuation, capitalisation, grammar slips) that an ordinary " +
    "reader would notice.",
  content:
    "The writing itself is fine, but the meaning goes wrong somewhere: it " +
    "clashes with the context or contradicts itself, so it becomes hard to follow.",
  register:
    "The continuation does not keep to the tone or text type of the context " +
    "(formal vs. informal, poetry, dialogue, narration, quotation), or the " +
    "style shifts abruptly.",
  repetitive:
    "Words, phrases, or whole ideas repeat without justification, either " +
    "within the continuation or relative to the context.",
  inappropriate:
    "The text contains pornographic, racist, hateful, sexist, or insulting language.",
  factual:
    "The text states something objectively wrong. Judge only claims general " +
    "secondary education would cover; if unsure, flag it only when the fact " +
    "can be checked online quickly and easily.",
};
