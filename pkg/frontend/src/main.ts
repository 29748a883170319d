import { ApiClient } from "./api.js";
import { WorkerApp } from "./app.js";

const root = document.getElementById("app");
if (root) {
  const app = new WorkerApp(root, new ApiClient(""));
  void app.start();
}
