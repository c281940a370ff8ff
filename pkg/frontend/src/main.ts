import { StudioApp } from "./app";

const $ = <T extends HTMLElement>(id: string) => document.getElementById(id) as T;

const app = new StudioApp(
  (import.meta as { env?: Record<string, string> }).env?.VITE_RELIGHT_URL ?? "http://127.0.0.1:8000",
  {
    viewport: $("viewport") as HTMLCanvasElement,
    relitImg: $("relit") as HTMLImageElement,
    originalCanvas: $("original") as HTMLCanvasElement,
    relitLayer: $("relit-layer"),
    divider: $("divider") as HTMLInputElement,
    status: $("status"),
    lightList: $("light-list"),
  },
);

app.viewer.resize(640, 480);

$("files").addEventListener("change", async (event) => {
  const input = event.target as HTMLInputElement;
  if (!input.files) return;
  const files = new Map<string, Uint8Array>();
  for (const f of Array.from(input.files)) {
    files.set(f.name, new Uint8Array(await f.arrayBuffer()));
  }
  try {
    await app.loadScene(files);
  } catch (err) {
    $("status").textContent = `load failed: ${err}`;
  }
});

$("add-point").addEventListener("click", () => app.addPointLight());
$("delete-light").addEventListener("click", () => app.deleteSelected());
$("intensity").addEventListener("input", (e) => {
  const v = parseFloat((e.target as HTMLInputElement).value);
  app.setSelectedIntensity([v, v, v]);
});
