/**
 * DOM rendering for the annotator: task screen (image at native resolution
 * inside a scrollable viewport, class banner, click counter, elapsed-time
 * indicator, toggleable crosshair guides, undo) and the qualification
 * feedback screen (translucent accepted-area overlays, pass/fail dots,
 * retake/proceed).
 */

import type { ApiClient } from "./api.js";
import { clientToImage } from "./coords.js";
import { CLICKS_PER_TASK } from "./clicks.js";
import { roleOfClick } from "./roles.js";
import type { AnnotationSession, SessionView } from "./session.js";

export interface RenderHandle {
  dispose(): void;
  /** Re-render the time indicator; called on an interval and from tests. */
  tick(): void;
}

export function renderApp(
  root: HTMLElement,
  session: AnnotationSession,
  api: ApiClient,
  now: () => number = () => Date.now(),
): RenderHandle {
  root.innerHTML = `
    <header class="xc-header">
      <span class="xc-class"></span>
      <span class="xc-instruction"></span>
    </header>
    <div class="xc-status">
      <span class="xc-counter"></span>
      <span class="xc-elapsed"></span>
      <button class="xc-undo" type="button">undo click</button>
      <label class="xc-crosshair-toggle">
        <input type="checkbox" class="xc-crosshair-box" checked> crosshair
      </label>
      <button class="xc-retry" type="button" hidden>retry submission</button>
    </div>
    <div class="xc-notice" hidden></div>
    <div class="xc-viewport">
      <div class="xc-stage">
        <img class="xc-image" alt="annotation task" draggable="false">
        <div class="xc-dots"></div>
        <div class="xc-cross xc-cross-h" hidden></div>
        <div class="xc-cross xc-cross-v" hidden></div>
      </div>
    </div>
    <section class="xc-feedback" hidden></section>
    <section class="xc-done" hidden>No more tasks. Thank you!</section>
  `;

  const q = <T extends Element>(selector: string): T => {
    const el = root.querySelector<T>(selector);
    if (!el) throw new Error(`missing element ${selector}`);
    return el;
  };
  const classEl = q<HTMLSpanElement>(".xc-class");
  const instructionEl = q<HTMLSpanElement>(".xc-instruction");
  const counterEl = q<HTMLSpanElement>(".xc-counter");
  const elapsedEl = q<HTMLSpanElement>(".xc-elapsed");
  const undoButton = q<HTMLButtonElement>(".xc-undo");
  const retryButton = q<HTMLButtonElement>(".xc-retry");
  const crosshairBox = q<HTMLInputElement>(".xc-crosshair-box");
  const noticeEl = q<HTMLDivElement>(".xc-notice");
  const viewportEl = q<HTMLDivElement>(".xc-viewport");
  const imageEl = q<HTMLImageElement>(".xc-image");
  const dotsEl = q<HTMLDivElement>(".xc-dots");
  const crossH = q<HTMLDivElement>(".xc-cross-h");
  const crossV = q<HTMLDivElement>(".xc-cross-v");
  const feedbackEl = q<HTMLElement>(".xc-feedback");
  const doneEl = q<HTMLElement>(".xc-done");

  let view: SessionView = session.view();

  imageEl.addEventListener("click", (event) => {
    if (!view.task) return;
    const point = clientToImage(
      event.clientX, event.clientY,
      imageEl.getBoundingClientRect(),
      view.task.width, view.task.height,
    );
    if (point) session.handleClick(point.x, point.y);
  });
  imageEl.addEventListener("mousemove", (event) => {
    if (crosshairBox.checked && view.task) {
      const rect = imageEl.getBoundingClientRect();
      crossH.hidden = false;
      crossV.hidden = false;
      crossH.style.top = `${event.clientY - rect.top}px`;
      crossV.style.left = `${event.clientX - rect.left}px`;
    }
  });
  crosshairBox.addEventListener("change", () => {
    if (!crosshairBox.checked) {
      crossH.hidden = true;
      crossV.hidden = true;
    }
  });
  undoButton.addEventListener("click", () => session.undo());
  retryButton.addEventListener("click", () => void session.flushQueued());

  function renderDots(): void {
    dotsEl.innerHTML = "";
    if (!view.task) return;
    // percent positioning keeps dots aligned under any display scaling
    for (const click of view.clicks) {
      const dot = document.createElement("span");
      dot.className = "xc-dot";
      dot.style.left = `${((click.x + 0.5) / view.task.width) * 100}%`;
      dot.style.top = `${((click.y + 0.5) / view.task.height) * 100}%`;
      dotsEl.appendChild(dot);
    }
  }

  function renderFeedback(): void {
    const feedback = view.feedback;
    if (!feedback) {
      feedbackEl.hidden = true;
      return;
    }
    feedbackEl.hidden = false;
    const title = feedback.passed
      ? `<p class="xc-qualified">You are qualified. Nice clicking!</p>
         <button class="xc-proceed" type="button">start annotating</button>`
      : `<p class="xc-failed">Some clicks landed outside the accepted areas.</p>
         <button class="xc-retake" type="button">retake the test</button>`;
    const cards = feedback.images.map((img) => {
      const overlays = Object.entries(img.overlays).map(
        ([role, href]) =>
          `<img class="xc-overlay" data-role="${role}" src="${api.resolve(href)}"
                style="opacity:0.35">`,
      ).join("");
      const rolesByClick = roleOfClick(img.points);
      const dots = img.points.map((p, i) => {
        const role = rolesByClick[i];
        const pass = img.accepted[role] === true;
        const left = ((p.x + 0.5) / img.width) * 100;
        const top = ((p.y + 0.5) / img.height) * 100;
        return `<span class="xc-dot ${pass ? "xc-dot-pass" : "xc-dot-fail"}"
                      data-role="${role}"
                      style="left:${left}%;top:${top}%"></span>`;
      }).join("");
      return `<figure class="xc-feedback-card">
        <div class="xc-feedback-stage">
          <img class="xc-feedback-image" src="${api.resolve(img.image)}"
               width="${img.width}" height="${img.height}">
          ${overlays}${dots}
        </div>
      </figure>`;
    }).join("");
    feedbackEl.innerHTML = `${title}<div class="xc-feedback-cards">${cards}</div>`;
    const button = feedbackEl.querySelector<HTMLButtonElement>(".xc-proceed, .xc-retake");
    button?.addEventListener("click", () => void session.proceed());
  }

  function render(): void {
    const task = view.task;
    const active = view.phase === "qualifying" || view.phase === "annotating";
    viewportEl.hidden = !active;
    doneEl.hidden = view.phase !== "done";
    if (task) {
      classEl.textContent = task.class;
      instructionEl.textContent = task.instruction;
      imageEl.src = api.resolve(task.image);
      // native resolution: the viewport scrolls rather than the image scaling
      imageEl.width = task.width;
      imageEl.height = task.height;
    }
    counterEl.textContent = `${view.clickCount}/${CLICKS_PER_TASK}`;
    undoButton.disabled = !(active && view.clickCount > 0 && view.clickCount < CLICKS_PER_TASK);
    retryButton.hidden = view.queuedSubmissions === 0;
    noticeEl.hidden = !view.notice;
    noticeEl.textContent = view.notice ?? "";
    renderDots();
    renderFeedback();
    tick();
  }

  function tick(): void {
    if (view.shownAtMs === null) {
      elapsedEl.textContent = "";
      return;
    }
    const seconds = Math.max(0, (now() - view.shownAtMs) / 1000);
    elapsedEl.textContent =
      `${seconds.toFixed(1)} s (suggested: ${view.suggestedSeconds} s for all four clicks)`;
    elapsedEl.classList.toggle("xc-overtime", seconds > view.suggestedSeconds);
  }

  session.onChange((next) => {
    view = next;
    render();
  });
  render();
  const timer = setInterval(tick, 250);
  return {
    tick,
    dispose: () => clearInterval(timer),
  };
}
