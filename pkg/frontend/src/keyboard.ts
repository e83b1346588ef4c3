import type { Label } from './api.js';

/** What a handled keypress asks the app to do. */
export type KeyAction =
  | { type: 'nudge'; dx: number; dy: number }
  | { type: 'label'; label: Label }
  | { type: 'submit' };

const NUDGE_STEP = 1; // px per arrow press
const NUDGE_LARGE_STEP = 10; // px with Shift

/**
 * Keyboard flow for mouse-free labeling:
 *
 * - Arrow keys: nudge the selection 1 px (10 px with Shift)
 * - H: label healthy, L: label lesion
 * - Enter: submit the current selection
 *
 * Returns null for keys this tool does not handle.
 */
export function handleAnnotationKey(e: {
  key: string;
  shiftKey: boolean;
}): KeyAction | null {
  const step = e.shiftKey ? NUDGE_LARGE_STEP : NUDGE_STEP;

  switch (e.key) {
    case 'ArrowLeft':
      return { type: 'nudge', dx: -step, dy: 0 };
    case 'ArrowRight':
      return { type: 'nudge', dx: step, dy: 0 };
    case 'ArrowUp':
      return { type: 'nudge', dx: 0, dy: -step };
    case 'ArrowDown':
      return { type: 'nudge', dx: 0, dy: step };
    case 'h':
    case 'H':
      return { type: 'label', label: 'healthy' };
    case 'l':
    case 'L':
      return { type: 'label', label: 'lesion' };
    case 'Enter':
      return { type: 'submit' };
    default:
      return null;
  }
}
