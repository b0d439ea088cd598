import { createApp } from "./server";
import { MODEL_ID } from "./embedder";

const port = Number(process.env.PORT ?? process.argv[2] ?? 8765);

const server = createApp().listen(port, "127.0.0.1", () => {
  const addr = server.address();
  const bound = typeof addr === "object" && addr ? addr.port : port;
  // the port line is machine-read by callers that start us on port 0
  console.log(`embed-service listening on 127.0.0.1:${bound} model=${MODEL_ID}`);
});
