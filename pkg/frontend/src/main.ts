import { ConsoleApp } from "./app.js";

const app = new ConsoleApp();
app.start().catch((err) => {
    const banner = document.getElementById("error-banner");
    if (banner) {
        banner.hidden = false;
        banner.textContent = `failed to start: ${err instanceof Error ? err.message : err}`;
    }
});
