/** Digit-key shortcuts: keys 1..K pick the matching class button.
 *
 * Skips events with modifier keys held and events targeting editable
 * elements, so typing an annotator name never fires a label.
 */

export type DigitHandler = (classIndex: number) => void;

function isEditable(target: EventTarget | null): boolean {
  if (!(target instanceof HTMLElement)) return false;
  const tag = target.tagName.toLowerCase();
  return tag === "input" || tag === "textarea" || tag === "select" || target.isContentEditable;
}

/** Attach listeners for digits 1..count; returns a detach function. */
export function bindDigitShortcuts(
  target: Pick<Document, "addEventListener" | "removeEventListener">,
  count: number,
  handler: DigitHandler,
): () => void {
  const byKey = new Map<string, number>();
  for (let i = 0; i < Math.min(count, 9); i++) {
    byKey.set(String(i + 1), i);
  }
  const onKeydown = (event: Event): void => {
    const e = event as KeyboardEvent;
    if (e.ctrlKey || e.metaKey || e.altKey) return;
    if (isEditable(e.target)) return;
    const index = byKey.get(e.key);
    if (index === undefined) return;
    e.preventDefault();
    handler(index);
  };
  target.addEventListener("keydown", onKeydown);
  return () => target.removeEventListener("keydown", onKeydown);
}
