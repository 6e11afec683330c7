import { ApiClient } from './api.js'
import { mountConsole } from './ui.js'

// same-origin by default; override with ?api=http://host:port
const params = new URLSearchParams(window.location.search)
const base = params.get('api') ?? ''
const console_ = mountConsole(new ApiClient(base), document)
void console_.boot()
