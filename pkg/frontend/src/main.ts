import { resolveApiBase } from "./api.js";
import { wireApp } from "./app.js";

const base = resolveApiBase(window.location.href);
wireApp(document, base);
