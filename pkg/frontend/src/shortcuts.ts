export interface ShortcutHandlers {
  approve: () => void;
  edit: () => void;
  reject: () => void;
  next: () => void;
  prev: () => void;
}

/**
 * Keyboard bindings for high-throughput review: a/e/r decide, j/k (or
 * arrows) move. Ignored while typing in an input or textarea so the edit
 * box stays usable. Returns the unbind function.
 */
export function bindShortcuts(
  target: Pick<Window, "addEventListener" | "removeEventListener">,
  handlers: ShortcutHandlers,
): () => void {
  const onKeyDown = (event: KeyboardEvent) => {
    const element = event.target as HTMLElement | null;
    if (
      element &&
      (element.tagName === "INPUT" || element.tagName === "TEXTAREA")
    ) {
      return;
    }
    switch (event.key) {
      case "a":
        event.preventDefault();
        handlers.approve();
        break;
      case "e":
        event.preventDefault();
        handlers.edit();
        break;
      case "r":
        event.preventDefault();
        handlers.reject();
        break;
      case "j":
      case "ArrowDown":
        event.preventDefault();
        handlers.next();
        break;
      case "k":
      case "ArrowUp":
        event.preventDefault();
        handlers.prev();
        break;
    }
  };
  target.addEventListener("keydown", onKeyDown as EventListener);
  return () => target.removeEventListener("keydown", onKeyDown as EventListener);
}
