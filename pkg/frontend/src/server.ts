import express, { Express, Request, Response } from "express";

import { DIM, MAX_TEXT_LENGTH, MODEL_ID, embedBatch } from "./embedder";

export interface ServerOptions {
  modelId?: string;
  /** Resolves when the model is ready; /health returns 503 until then. */
  load?: Promise<void>;
}

export function createApp(options: ServerOptions = {}): Express {
  const modelId = options.modelId ?? MODEL_ID;
  let ready = options.load === undefined;
  let loadFailed = false;
  options.load
    ?.then(() => {
      ready = true;
    })
    .catch(() => {
      loadFailed = true;
    });

  const app = express();
  app.use(express.json({ limit: "16mb" }));

  app.get("/health", (_req: Request, res: Response) => {
    if (loadFailed) {
      res.status(503).json({ status: "error", model: modelId });
    } else if (!ready) {
      res.status(503).json({ status: "loading", model: modelId });
    } else {
      res.json({ status: "ok", model: modelId });
    }
  });

  app.post("/embed", (req: Request, res: Response) => {
    if (loadFailed) {
      res.status(503).json({ error: "model failed to load" });
      return;
    }
    if (!ready) {
      res.status(503).json({ error: "model is loading" });
      return;
    }
    const body = req.body;
    if (
      !body ||
      !Array.isArray(body.texts) ||
      body.texts.length === 0 ||
      !body.texts.every((t: unknown) => typeof t === "string")
    ) {
      res.status(400).json({ error: "texts must be a non-empty string array" });
      return;
    }
    if (body.model !== undefined && body.model !== modelId) {
      res.status(400).json({ error: `unknown model: ${body.model}` });
      return;
    }
    const over = body.texts.find((t: string) => t.length > MAX_TEXT_LENGTH);
    if (over !== undefined) {
      res
        .status(413)
        .json({ error: `text exceeds ${MAX_TEXT_LENGTH} characters` });
      return;
    }
    res.json({ vectors: embedBatch(body.texts), dim: DIM, model: modelId });
  });

  return app;
}
