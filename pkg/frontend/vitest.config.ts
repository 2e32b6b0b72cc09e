// Plain object config (no vitest/config import) so it loads under both a
// project-local and a globally installed vitest.
//
// Integration tests spawn a scripted-backend server (kernel pool included),
// so files run serially with generous timeouts; the same-origin policy is
// disabled because tests fetch the spawned server from an about:blank page.
export default {
  test: {
    environment: "happy-dom",
    environmentOptions: {
      happyDOM: { settings: { fetch: { disableSameOriginPolicy: true } } },
    },
    include: ["tests/**/*.test.ts"],
    fileParallelism: false,
    testTimeout: 180_000,
    hookTimeout: 180_000,
  },
};
