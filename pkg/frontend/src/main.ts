import { Client } from "./api.js";
import { startExplorer } from "./app.js";

const root = document.getElementById("app");
if (root) {
  void startExplorer(root, new Client());
}
