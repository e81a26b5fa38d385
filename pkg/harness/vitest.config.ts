import { defineConfig } from "vitest/config";

// Bundle generation and C compilation dominate; give the hooks room.
export default defineConfig({
  test: {
    include: ["test/**/*.test.ts"],
    testTimeout: 120_000,
    hookTimeout: 300_000,
  },
});
