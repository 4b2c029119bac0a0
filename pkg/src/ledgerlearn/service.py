"""JSON-over-HTTP node interface around one live :class:`~ledgerlearn.simnet.SimState`.

Clients authenticate with ``Authorization: Bearer <account id>``.
Contributions are handed to a single writer thread and processed in
arrival order; every other endpoint only reads.
"""
import queue
import threading
from concurrent.futures import Future

from fastapi import FastAPI, File, Request, UploadFile
from fastapi.responses import JSONResponse

from . import ledger, simnet
from .contracts import Role
from .errors import ArityMismatch, LedgerLearnError


class ContributionWorker:
    """Owns all writes to the simulation state; jobs run strictly FIFO."""

    def __init__(self, state: simnet.SimState):
        self.state = state
        self._jobs = queue.Queue()
        self._thread = threading.Thread(target=self._run, name="contribution-writer", daemon=True)
        self._thread.start()

    def _run(self):
        while True:
            account, payload, fut = self._jobs.get()
            try:
                fut.set_result(simnet.contribute(self.state, account, payload))
            except BaseException as exc:  # handed back to the waiting request
                fut.set_exception(exc)

    def submit(self, account, payload) -> Future:
        fut = Future()
        self._jobs.put((account, payload, fut))
        return fut


def _error(status, message, **extra):
    return JSONResponse({"error": message, **extra}, status_code=status)


def create_app(state: simnet.SimState) -> FastAPI:
    app = FastAPI(title="ledgerlearn node")
    worker = ContributionWorker(state)
    app.state.sim = state
    app.state.worker = worker

    def caller(request: Request):
        header = request.headers.get("authorization", "")
        scheme, _, token = header.partition(" ")
        if scheme.lower() != "bearer" or token.strip() not in state.contracts.accounts:
            return None
        return state.contracts.accounts[token.strip()]

    def unauthorized():
        return _error(401, "unknown or missing bearer token")

    @app.post("/contribute")
    def contribute(request: Request, dataset: UploadFile = File(None)):
        account = caller(request)
        if account is None:
            return unauthorized()
        if account.role is not Role.CONTRIBUTOR:
            return _error(403, f"{account.role.value} accounts cannot contribute")
        if dataset is None:
            return _error(422, "multipart field 'dataset' is required", reason="MissingDataset")
        payload = dataset.file.read()
        outcome = worker.submit(account, payload).result()
        body = outcome.to_dict()
        return JSONResponse(body, status_code=422 if outcome.status == "rejected" else 200)

    @app.post("/query")
    async def query(request: Request):
        account = caller(request)
        if account is None:
            return unauthorized()
        try:
            body = await request.json()
        except ValueError:
            return _error(400, "body must be JSON")
        row = body.get("features") if isinstance(body, dict) else body
        if not isinstance(row, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool)
                                                for v in row):
            return _error(400, "features must be a list of numbers")
        try:
            prediction, digest = simnet.serve_query(state, account, row)
        except ArityMismatch as exc:
            return _error(400, str(exc))
        return {"prediction": prediction, "model_hash": digest}

    @app.get("/chain")
    def chain(request: Request):
        if caller(request) is None:
            return unauthorized()
        blocks = list(state.chain.blocks)
        return {"difficulty": state.chain.difficulty, "length": len(blocks),
                "blocks": [b.to_dict() for b in blocks]}

    @app.get("/chain/verify")
    def chain_verify(request: Request):
        if caller(request) is None:
            return unauthorized()
        snapshot = ledger.Chain(state.chain.difficulty, list(state.chain.blocks))
        bad = ledger.verify_chain(snapshot)
        if bad is None:
            return {"status": "ok", "length": len(snapshot)}
        return {"status": "invalid", "first_invalid_index": bad}

    @app.get("/model")
    def model(request: Request):
        if caller(request) is None:
            return unauthorized()
        c = state.contracts
        return {"model_hash": c.current_model_hash,
                "best_metrics": None if c.best is None else c.best.to_dict(),
                "price": c.price, "gamma": c.gamma, "updates": c.updates}

    @app.get("/accounts/{account_id}")
    def account(account_id: str, request: Request):
        if caller(request) is None:
            return unauthorized()
        acct = state.contracts.accounts.get(account_id)
        if acct is None:
            return _error(404, "no such account")
        return {"id": acct.id, "name": acct.name, "role": acct.role.value, "balance": acct.balance}

    @app.get("/stats")
    def stats(request: Request):
        if caller(request) is None:
            return unauthorized()
        s = state.stats
        return {"total_contributions": s.contributions, "model_updates": s.model_updates,
                "queries_served": s.queries_served}

    @app.exception_handler(LedgerLearnError)
    def domain_error(request: Request, exc: LedgerLearnError):
        return _error(422, str(exc), reason=type(exc).__name__)

    return app


def serve(state: simnet.SimState, host: str = "127.0.0.1", port: int = 8000):
    import uvicorn

    uvicorn.run(create_app(state), host=host, port=port)
