import { ServiceClient } from './api.js';
import { SessionConsole } from './console.js';

window.addEventListener('DOMContentLoaded', () => {
    const root = document.getElementById('app');
    if (!root) {
        console.error('missing #app mount point');
        return;
    }
    const params = new URLSearchParams(window.location.search);
    const base = params.get('service') ?? window.location.origin;
    const sessionConsole = new SessionConsole(root, new ServiceClient(base));
    void sessionConsole.start();
});
