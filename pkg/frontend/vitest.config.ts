import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    // e2e tests spawn a python server each; keep files sequential so they
    // never fight over the CPU or ports
    fileParallelism: false,
    testTimeout: 30000,
    hookTimeout: 300000,
  },
});
