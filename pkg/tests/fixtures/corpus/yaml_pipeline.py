import yaml
from langchain import LLMChain, PromptTemplate
from langchain_openai import ChatOpenAI

template = PromptTemplate(
    input_variables=["service"],
    template="Produce a YAML config block for {service}. YAML only.",
)
chain = LLMChain(llm=ChatOpenAI(), prompt=template)


def build_config(service, defaults_path):
    with open(defaults_path) as fh:
        defaults = yaml.safe_load(fh)
    rendered = chain.run(service=service)
    config = yaml.unsafe_load(rendered)
    defaults.update(config)
    return defaults
