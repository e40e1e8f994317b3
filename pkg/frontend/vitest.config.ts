import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "node",
    include: ["tests/**/*.test.ts"],
    // the flow test builds a phantom and boots the real service
    testTimeout: 60000,
    hookTimeout: 60000,
  },
});
