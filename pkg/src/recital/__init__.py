"""Curation workshop for crowdsourced annotation and transcription runs.

Turns raw crowdsourcing task logs into a validated historical database in
four stages (crowdsourcing log, raw artifact chain, cooked consensus, domain
entities), with full lineage on every derived record, digital page
surrogates, a REST service and a curator review queue.
"""

from recital.store import RecordId, Stage, Store, StoreSnapshot

__version__ = "0.1.0"

__all__ = ["Stage", "RecordId", "Store", "StoreSnapshot", "__version__"]
