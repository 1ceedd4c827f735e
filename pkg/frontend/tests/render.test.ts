import { afterEach, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { renderApp, type RenderHandle } from "../src/render.js";
import { AnnotationSession } from "../src/session.js";

function task(id: string, kind: "qualification" | "annotation") {
  return {
    task_id: id, kind, image: "/images/a.png", class: "dog",
    width: 40, height: 30,
    instruction: "click the four extreme points",
    progress: { index: 1, total: 5 },
  };
}

function scriptedFetch(script: Array<() => Response | Error>) {
  return async (): Promise<Response> => {
    const next = script.shift();
    if (!next) throw new Error("script exhausted");
    const out = next();
    if (out instanceof Error) throw out;
    return out;
  };
}

let handle: RenderHandle | null = null;
afterEach(() => handle?.dispose());

async function mount(script: Array<() => Response | Error>, clockStart = 50_000) {
  const root = document.createElement("div");
  document.body.appendChild(root);
  let nowMs = clockStart;
  const clock = () => (nowMs += 500);
  const api = new ApiClient("http://test", scriptedFetch(script));
  const session = new AnnotationSession(api, "w1", clock);
  handle = renderApp(root, session, api, clock);
  await session.start();
  return { root, session, setNow: (t: number) => (nowMs = t) };
}

function stubRect(img: HTMLImageElement, rect: { left: number; top: number; width: number; height: number }) {
  img.getBoundingClientRect = () =>
    ({ ...rect, right: rect.left + rect.width, bottom: rect.top + rect.height,
       x: rect.left, y: rect.top, toJSON: () => rect }) as DOMRect;
}

describe("renderApp", () => {
  it("renders the class banner, instruction, counter and native-size image", async () => {
    const { root } = await mount([
      () => Response.json({ status: "registered" }),
      () => Response.json(task("q:1:0", "qualification")),
    ]);
    expect(root.querySelector(".xc-class")!.textContent).toBe("dog");
    expect(root.querySelector(".xc-instruction")!.textContent).toContain("extreme points");
    expect(root.querySelector(".xc-counter")!.textContent).toBe("0/4");
    const img = root.querySelector<HTMLImageElement>(".xc-image")!;
    expect(img.width).toBe(40);
    expect(img.height).toBe(30);
    expect(img.src).toBe("http://test/images/a.png");
  });

  it("converts click events to image pixels and counts them", async () => {
    const { root, session } = await mount([
      () => Response.json({ status: "registered" }),
      () => Response.json(task("q:1:0", "qualification")),
    ]);
    const img = root.querySelector<HTMLImageElement>(".xc-image")!;
    stubRect(img, { left: 10, top: 20, width: 80, height: 60 }); // 2x zoom
    img.dispatchEvent(new MouseEvent("click", { clientX: 10 + 2 * 17 + 1, clientY: 20 + 2 * 13 + 1 }));
    await session.settle();
    expect(root.querySelector(".xc-counter")!.textContent).toBe("1/4");
    expect(session.view().clicks[0]).toMatchObject({ x: 17, y: 13 });
    const dots = root.querySelectorAll(".xc-dot");
    expect(dots).toHaveLength(1);
  });

  it("undo button pops a click and clicks outside the image are ignored", async () => {
    const { root, session } = await mount([
      () => Response.json({ status: "registered" }),
      () => Response.json(task("q:1:0", "qualification")),
    ]);
    const img = root.querySelector<HTMLImageElement>(".xc-image")!;
    stubRect(img, { left: 0, top: 0, width: 40, height: 30 });
    img.dispatchEvent(new MouseEvent("click", { clientX: 200, clientY: 5 }));
    expect(session.view().clickCount).toBe(0);
    img.dispatchEvent(new MouseEvent("click", { clientX: 5, clientY: 5 }));
    expect(session.view().clickCount).toBe(1);
    root.querySelector<HTMLButtonElement>(".xc-undo")!.click();
    expect(session.view().clickCount).toBe(0);
  });

  it("shows the elapsed indicator against the suggested 10 s", async () => {
    const { root, setNow } = await mount([
      () => Response.json({ status: "registered" }),
      () => Response.json(task("q:1:0", "qualification")),
    ]);
    setNow(70_000);
    handle!.tick();
    const elapsed = root.querySelector(".xc-elapsed")!;
    expect(elapsed.textContent).toContain("suggested: 10 s");
    expect(elapsed.classList.contains("xc-overtime")).toBe(true);
  });

  it("crosshair toggle hides the guides", async () => {
    const { root } = await mount([
      () => Response.json({ status: "registered" }),
      () => Response.json(task("q:1:0", "qualification")),
    ]);
    const img = root.querySelector<HTMLImageElement>(".xc-image")!;
    stubRect(img, { left: 0, top: 0, width: 40, height: 30 });
    img.dispatchEvent(new MouseEvent("mousemove", { clientX: 7, clientY: 9 }));
    const crossH = root.querySelector<HTMLElement>(".xc-cross-h")!;
    expect(crossH.hidden).toBe(false);
    expect(crossH.style.top).toBe("9px");
    const toggle = root.querySelector<HTMLInputElement>(".xc-crosshair-box")!;
    toggle.checked = false;
    toggle.dispatchEvent(new Event("change"));
    expect(root.querySelector<HTMLElement>(".xc-cross-h")!.hidden).toBe(true);
  });

  it("renders feedback overlays sized to the image with pass/fail dots", async () => {
    const { root, session } = await mount([
      () => Response.json({ status: "registered" }),
      () => Response.json(task("q:1:4", "qualification")),
      () => Response.json({
        status: "recorded", kind: "qualification", image: "/images/a.png",
        accepted: { left: true, top: false, right: true, bottom: true },
        overlays: { left: "/files/l.png", top: "/files/t.png",
                    right: "/files/r.png", bottom: "/files/b.png" },
        session: { completed: true, passed: false, attempt: 1, images: [] },
      }),
    ]);
    const img = root.querySelector<HTMLImageElement>(".xc-image")!;
    stubRect(img, { left: 0, top: 0, width: 40, height: 30 });
    // left, top, right, bottom click positions in click order
    for (const [x, y] of [[2, 15], [20, 2], [38, 15], [20, 28]]) {
      img.dispatchEvent(new MouseEvent("click", { clientX: x + 0.5, clientY: y + 0.5 }));
    }
    await session.settle();

    const feedback = root.querySelector<HTMLElement>(".xc-feedback")!;
    expect(feedback.hidden).toBe(false);
    const feedbackImg = feedback.querySelector<HTMLImageElement>(".xc-feedback-image")!;
    expect(feedbackImg.width).toBe(40);
    expect(feedbackImg.height).toBe(30);
    expect(feedback.querySelectorAll(".xc-overlay")).toHaveLength(4);
    const failDots = feedback.querySelectorAll(".xc-dot-fail");
    expect(failDots).toHaveLength(1);
    expect(failDots[0].getAttribute("data-role")).toBe("top");
    expect(feedback.querySelector(".xc-retake")).not.toBeNull();
  });
});
