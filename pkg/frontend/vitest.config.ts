import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "happy-dom",
    include: ["tests/**/*.test.ts"],
    // the integration suite boots the campaign service in a subprocess
    testTimeout: 30000,
    hookTimeout: 30000,
  },
});
