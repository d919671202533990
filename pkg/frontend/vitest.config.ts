import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    // viewer-loop spawns a python fixture server; keep runs serial so two
    // workers never race for the port
    fileParallelism: false,
  },
});
