import { ServiceClient } from "./api.js";
import { createApp } from "./app.js";

const root = document.getElementById("app");
if (!root) throw new Error("missing #app element");
// same-origin by default: the service serves these assets from its static route
createApp(root, { client: new ServiceClient("") });
