// Minimal static server for the built dashboard: index.html plus dist/ JS.
// Usage: node dist/server.js [port]

import * as fs from "node:fs";
import * as http from "node:http";
import * as path from "node:path";
import { fileURLToPath } from "node:url";

const here = path.dirname(fileURLToPath(import.meta.url));
const root = path.join(here, "..");
const port = Number(process.argv[2] ?? process.env.PORT ?? 8780);

const MIME: Record<string, string> = {
  ".html": "text/html; charset=utf-8",
  ".js": "text/javascript; charset=utf-8",
  ".css": "text/css; charset=utf-8",
  ".svg": "image/svg+xml",
  ".json": "application/json",
};

const server = http.createServer((req, res) => {
  const url = new URL(req.url ?? "/", `http://localhost:${port}`);
  let file = url.pathname === "/" ? "/public/index.html" : url.pathname;
  if (!file.startsWith("/dist/") && !file.startsWith("/public/")) {
    file = `/public${file}`;
  }
  const resolved = path.join(root, path.normalize(file));
  if (!resolved.startsWith(root) || !fs.existsSync(resolved) || fs.statSync(resolved).isDirectory()) {
    res.writeHead(404, { "Content-Type": "text/plain" });
    res.end("not found");
    return;
  }
  res.writeHead(200, { "Content-Type": MIME[path.extname(resolved)] ?? "application/octet-stream" });
  fs.createReadStream(resolved).pipe(res);
});

server.listen(port, () => {
  console.log(`dashboard on http://localhost:${port}/?api=http://localhost:8747`);
});
