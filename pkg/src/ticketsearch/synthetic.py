"""Deterministic synthetic ticket generator.

Stands in for the ticketing-system dump: produces multi-message
conversations carrying realistic e-mail noise (verbatim quoted history,
reply-intro lines, signatures, stray headers) so the cleaning pipeline has
something real to chew on. Output is byte-identical for a fixed seed.
"""

from __future__ import annotations

import random
from datetime import datetime, timedelta, timezone

from .corpus import ChunkRecord
from .normalize import ChunkingPolicy, NormalizationRules, RawMessage, chunk_conversation, normalize_text

DEFAULT_DEPARTMENTS = ("hpc", "storage", "apps", "networking", "accounts")
DEFAULT_LANGUAGES = ("es", "en", "gl")
DEFAULT_WINDOW_START = datetime(2024, 1, 1, tzinfo=timezone.utc)
DEFAULT_WINDOW_END = datetime(2025, 6, 30, tzinfo=timezone.utc)

_SENTENCES = {
    "en": [
        "The batch job stays pending in the shared queue for hours.",
        "Loading the compiler module fails with an unsatisfied dependency.",
        "My home directory quota seems exhausted after the last transfer.",
        "The mpi program crashes at startup with a segmentation fault.",
        "Could you extend the walltime limit for the long simulations?",
        "The scratch filesystem reports input output errors since yesterday.",
        "Login through the vpn gateway times out intermittently.",
        "The profiler shows most cycles spent inside the solver kernel.",
        "We need an additional project allocation for the next quarter.",
        "The checkpoint files grow far beyond the expected size.",
        "Compilation aborts complaining about a missing shared library.",
        "The visualization session disconnects after a few minutes.",
        "Array tasks finish but the output files are empty.",
        "The license server rejects connections from the compute hosts.",
        "Transfer speed to the archive system dropped sharply this week.",
        "The scheduler reports an invalid account on submission.",
        "Interactive sessions on the gpu partition never start.",
        "The conda environment breaks after the maintenance window.",
    ],
    "es": [
        "El trabajo se queda en cola durante demasiado tiempo.",
        "La carga del modulo del compilador falla con una dependencia rota.",
        "La cuota de mi directorio personal aparece agotada tras la copia.",
        "El programa mpi se cierra al arrancar con un fallo de segmentacion.",
        "Necesitamos ampliar el limite de tiempo para las simulaciones largas.",
        "El sistema de ficheros temporal da errores de lectura desde ayer.",
        "La conexion por vpn se corta de forma intermitente.",
        "El perfilador indica que el nucleo del solver consume casi todo.",
        "Solicitamos una asignacion adicional para el proximo trimestre.",
        "Los ficheros de checkpoint crecen mucho mas de lo esperado.",
        "La compilacion aborta por una biblioteca compartida ausente.",
        "La sesion de visualizacion se desconecta a los pocos minutos.",
        "Las tareas del array terminan pero los ficheros de salida estan vacios.",
        "El servidor de licencias rechaza conexiones desde los nodos.",
        "La velocidad de transferencia al archivo ha bajado esta semana.",
        "El planificador indica una cuenta no valida al enviar.",
    ],
    "gl": [
        "O traballo queda na cola durante demasiado tempo.",
        "A carga do modulo do compilador falla cunha dependencia rota.",
        "A cota do meu directorio persoal aparece esgotada tras a copia.",
        "O programa mpi pecha ao arrincar cun fallo de segmentacion.",
        "Precisamos ampliar o limite de tempo para as simulacions longas.",
        "O sistema de ficheiros temporal da erros de lectura desde onte.",
        "A conexion pola vpn cortase de xeito intermitente.",
        "Os ficheiros de checkpoint medran moito mais do esperado.",
        "A compilacion aborta por unha biblioteca compartida ausente.",
        "As tarefas do array rematan pero os ficheiros de saida estan baleiros.",
        "O servidor de licenzas rexeita conexions desde os nodos.",
        "A velocidade de transferencia ao arquivo baixou esta semana.",
    ],
}

_NAMES = (
    "Maria Lopez", "Xoan Castro", "Ana Souto", "Pedro Blanco",
    "Lucia Rey", "Brais Novo", "Carmen Vidal", "Diego Pazos",
)

_INTRO_TEMPLATES = {
    "en": "On {date}, {name} wrote:",
    "es": "El {date}, {name} escribió:",
    "gl": "O {date}, {name} escribiu:",
}


def _signature(rng: random.Random, name: str) -> str:
    lines = ["-- ", name, "HPC user support", "Tel: +34 981 000 000"]
    return "\n".join(lines)


def _quote(text: str) -> str:
    return "\n".join("> " + line for line in text.split("\n"))


def generate_synthetic_threads(
    seed: int,
    n_tickets: int,
    languages=DEFAULT_LANGUAGES,
    *,
    departments=DEFAULT_DEPARTMENTS,
    window_start: datetime = DEFAULT_WINDOW_START,
    window_end: datetime = DEFAULT_WINDOW_END,
) -> list[list[RawMessage]]:
    """Raw noisy conversations, one list of messages per ticket.

    Message k quotes the bodies of messages 0..k-1 verbatim under "> "
    markers, after a reply-intro line, so cleaning can be checked for the
    single-occurrence property.
    """
    if n_tickets < 0:
        raise ValueError("n_tickets must be >= 0")
    rng = random.Random(seed)
    languages = [l for l in DEFAULT_LANGUAGES if l in set(languages)]
    if not languages:
        raise ValueError("languages must include at least one of es, en, gl")
    span = max(int((window_end - window_start).total_seconds()), 1)

    threads: list[list[RawMessage]] = []
    for t in range(n_tickets):
        ticket_id = f"T{seed:03d}-{t:05d}"
        conversation_id = f"{ticket_id}/c0"
        department = rng.choice(departments)
        language = rng.choice(languages)
        base_ts = window_start + timedelta(seconds=rng.randrange(span))
        n_messages = rng.randint(1, 4)
        pool = _SENTENCES[language]
        # Distinct sentences within one conversation keep each fact unique.
        picks = rng.sample(pool, min(len(pool), n_messages * 3))
        messages: list[RawMessage] = []
        bodies: list[str] = []
        cursor = 0
        for position in range(n_messages):
            n_sentences = rng.randint(1, 3)
            body_lines = picks[cursor : cursor + n_sentences]
            cursor += n_sentences
            if not body_lines:
                break
            bodies.append("\n".join(body_lines))
            parts = []
            if rng.random() < 0.3:
                parts.append(f"De: user{rng.randrange(100)}@example.org")
                parts.append("Asunto: consulta")
            noisy = [line.replace(" ", "  ", 1) if rng.random() < 0.3 else line
                     for line in body_lines]
            parts.append("\n".join(noisy))
            if position > 0:
                name = rng.choice(_NAMES)
                date = (base_ts + timedelta(hours=position - 1)).strftime("%d/%m/%Y")
                parts.append("")
                parts.append(_INTRO_TEMPLATES[language].format(date=date, name=name))
                parts.append(_quote("\n\n".join(bodies[:position])))
            parts.append("")
            parts.append(_signature(rng, rng.choice(_NAMES)))
            ts = base_ts + timedelta(hours=position)
            messages.append(
                RawMessage(
                    ticket_id=ticket_id,
                    conversation_id=conversation_id,
                    position=position,
                    raw_text="\n".join(parts),
                    last_updated=min(ts, window_end),
                    department=department,
                )
            )
        threads.append(messages)
    return threads


def corpus_from_threads(
    threads,
    *,
    policy: ChunkingPolicy | None = None,
    rules: NormalizationRules | None = None,
    ingest_job_id: str = "synthetic",
) -> list[ChunkRecord]:
    """Clean and chunk raw conversations into corpus records."""
    policy = policy or ChunkingPolicy()
    records: list[ChunkRecord] = []
    for thread in threads:
        if not thread:
            continue
        cleaned = [normalize_text(m.raw_text, rules) for m in thread]
        last = max(m.last_updated for m in thread)
        records.extend(
            chunk_conversation(
                cleaned,
                policy,
                ticket_id=thread[0].ticket_id,
                conversation_id=thread[0].conversation_id,
                department=thread[0].department,
                last_updated=last,
                source_type="ticket",
                ingest_job_id=ingest_job_id,
            )
        )
    return records


def generate_synthetic_corpus(
    seed: int,
    n_tickets: int,
    languages=DEFAULT_LANGUAGES,
    *,
    departments=DEFAULT_DEPARTMENTS,
    policy: ChunkingPolicy | None = None,
    ingest_job_id: str = "synthetic",
    window_start: datetime = DEFAULT_WINDOW_START,
    window_end: datetime = DEFAULT_WINDOW_END,
) -> list[ChunkRecord]:
    """Deterministic corpus: fixed seed, byte-identical serialization."""
    threads = generate_synthetic_threads(
        seed, n_tickets, languages,
        departments=departments,
        window_start=window_start,
        window_end=window_end,
    )
    return corpus_from_threads(threads, policy=policy, ingest_job_id=ingest_job_id)
