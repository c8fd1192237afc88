export * from "./types.js";
export * from "./api.js";
export * from "./views.js";
export * from "./store.js";
